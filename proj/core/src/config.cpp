// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/config.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dait {

namespace {

// --- schema -------------------------------------------------------------------

struct SchemaNode {
    std::string type;  // leaf type tag; empty for objects
    std::map<std::string, SchemaNode> children;
};

SchemaNode leaf(const char* type) { return SchemaNode{type, {}}; }

SchemaNode augment_policy_schema() {
    SchemaNode policy;
    policy.children["seed"] = leaf("uint");
    policy.children["ops"] = leaf("ops_array");
    return policy;
}

SchemaNode encoder_schema() {
    SchemaNode enc;
    enc.children["kind"] = leaf("string");
    enc.children["seed"] = leaf("uint");
    enc.children["raw_dim"] = leaf("int");
    enc.children["class_cos"] = leaf("real");
    enc.children["channels"] = leaf("int_array");
    enc.children["adapter"] = leaf("string");
    return enc;
}

const SchemaNode& run_config_schema() {
    static const SchemaNode schema = [] {
        SchemaNode s;
        s.children["stage"] = leaf("string");
        s.children["mode"] = leaf("string");
        s.children["epochs"] = leaf("int");
        s.children["batch_size"] = leaf("int");
        s.children["seed"] = leaf("uint");
        s.children["determinism"] = leaf("string");
        s.children["out_dir"] = leaf("string");
        s.children["prompt_template"] = leaf("string");

        SchemaNode opt;
        opt.children["name"] = leaf("string");
        opt.children["lr"] = leaf("real");
        opt.children["weight_decay"] = leaf("real");
        opt.children["lr_decay_interval"] = leaf("int");
        opt.children["lr_decay_factor"] = leaf("real");
        s.children["optimizer"] = opt;

        SchemaNode sched;
        sched.children["k"] = leaf("real");
        sched.children["b"] = leaf("real");
        sched.children["clamp_lo"] = leaf("real");
        sched.children["clamp_hi"] = leaf("real");
        s.children["schedule"] = sched;

        SchemaNode losses;
        losses.children["T"] = leaf("real");
        losses.children["kl_order"] = leaf("string");
        s.children["losses"] = losses;

        SchemaNode data;
        data.children["source"] = leaf("string");
        data.children["root"] = leaf("string");
        data.children["num_classes"] = leaf("int");
        data.children["per_class"] = leaf("int");
        data.children["image_side"] = leaf("int");
        data.children["separation"] = leaf("real");
        data.children["seed"] = leaf("uint");
        data.children["subsample_ratio"] = leaf("real");
        data.children["subsample_seed"] = leaf("uint");
        s.children["data"] = data;

        SchemaNode augment;
        augment.children["train"] = augment_policy_schema();
        augment.children["eval"] = augment_policy_schema();
        s.children["augment"] = augment;

        SchemaNode encoders;
        encoders.children["vlm_image"] = encoder_schema();
        encoders.children["vlm_text"] = encoder_schema();
        encoders.children["intermediate"] = encoder_schema();
        encoders.children["student"] = encoder_schema();
        s.children["encoders"] = encoders;

        SchemaNode projection;
        projection.children["dim"] = leaf("int");
        projection.children["hidden"] = leaf("int");
        projection.children["fit_epochs"] = leaf("int");
        projection.children["fit_lr"] = leaf("real");
        projection.children["fit_weight_decay"] = leaf("real");
        projection.children["fit_scale"] = leaf("real");
        s.children["projection"] = projection;

        SchemaNode checkpoint;
        checkpoint.children["stage1_ref"] = leaf("string");
        checkpoint.children["fvlm_ref"] = leaf("string");
        checkpoint.children["select"] = leaf("string");
        s.children["checkpoint"] = checkpoint;

        SchemaNode eval;
        eval.children["checkpoint"] = leaf("string");
        s.children["eval"] = eval;

        SchemaNode analysis;
        analysis.children["checkpoint"] = leaf("string");
        analysis.children["role"] = leaf("string");
        analysis.children["split"] = leaf("string");
        analysis.children["dump_x"] = leaf("string");
        analysis.children["dump_y"] = leaf("string");
        analysis.children["dump"] = leaf("string");
        s.children["analysis"] = analysis;
        return s;
    }();
    return schema;
}

const std::set<std::string>& augment_op_keys(const std::string& op) {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"random_resized_crop", {"op", "scale", "aspect"}},
        {"horizontal_flip", {"op", "p"}},
        {"color_jitter", {"op", "brightness", "contrast", "saturation"}},
        {"resize", {"op", "side"}},
        {"normalize", {"op", "mean", "std"}},
    };
    auto it = keys.find(op);
    if (it == keys.end()) throw ConfigError("unknown augment op '" + op + "'");
    return it->second;
}

void check_leaf_type(const json& v, const std::string& type, const std::string& path) {
    const auto fail = [&](const char* want) {
        throw ConfigError("key '" + path + "' must be " + want + ", got " + v.dump());
    };
    if (type == "int") {
        if (!v.is_number_integer() && !v.is_number_unsigned()) fail("an integer");
    } else if (type == "uint") {
        if ((!v.is_number_integer() && !v.is_number_unsigned()) || (v.is_number_integer() && v.get<std::int64_t>() < 0))
            fail("a non-negative integer");
    } else if (type == "real") {
        if (!v.is_number()) fail("a number");
    } else if (type == "string") {
        if (!v.is_string()) fail("a string");
    } else if (type == "int_array") {
        if (!v.is_array()) fail("an array of integers");
        for (const auto& e : v)
            if (!e.is_number_integer() && !e.is_number_unsigned()) fail("an array of integers");
    } else if (type == "ops_array") {
        if (!v.is_array()) fail("an array of augment ops");
        for (const auto& e : v) {
            if (!e.is_object() || !e.contains("op") || !e["op"].is_string())
                throw ConfigError("key '" + path + "' entries must be objects with an 'op' name");
            const auto& allowed = augment_op_keys(e["op"].get<std::string>());
            for (const auto& [k, _] : e.items())
                if (!allowed.count(k))
                    throw ConfigError("unknown key '" + k + "' in augment op '" + e["op"].get<std::string>() +
                                      "' under '" + path + "'");
        }
    } else {
        fail(type.c_str());
    }
}

void validate_tree(const json& obj, const SchemaNode& schema, const std::string& prefix) {
    if (!obj.is_object()) throw ConfigError("key '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        auto it = schema.children.find(key);
        if (it == schema.children.end()) throw ConfigError("unknown config key '" + path + "'");
        if (it->second.type.empty())
            validate_tree(value, it->second, path);
        else
            check_leaf_type(value, it->second.type, path);
    }
}

// --- typed getters ---------------------------------------------------------------

const json* find(const json& obj, std::initializer_list<const char*> path) {
    const json* cur = &obj;
    for (const char* key : path) {
        if (!cur->is_object() || !cur->contains(key)) return nullptr;
        cur = &(*cur)[key];
    }
    return cur;
}

template <typename T>
T get_or(const json& obj, std::initializer_list<const char*> path, T fallback) {
    const json* v = find(obj, path);
    if (!v) return fallback;
    return v->get<T>();
}

// --- augment policies ---------------------------------------------------------------

std::vector<double> real_array(const json& v, std::size_t want, const std::string& path) {
    if (!v.is_array() || v.size() != want)
        throw ConfigError("key '" + path + "' must be an array of " + std::to_string(want) + " numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("key '" + path + "' must contain numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

AugmentPolicy policy_from_json(const json& p, const std::string& path) {
    AugmentPolicy policy;
    policy.seed = get_or<std::uint64_t>(p, {"seed"}, 0);
    if (!p.contains("ops")) throw ConfigError("key '" + path + "' needs an 'ops' array");
    for (const auto& op : p["ops"]) {
        const std::string name = op["op"].get<std::string>();
        if (name == "random_resized_crop") {
            RandomResizedCropOp o;
            if (op.contains("scale")) {
                auto s = real_array(op["scale"], 2, path + ".scale");
                o.scale_lo = s[0];
                o.scale_hi = s[1];
            }
            if (op.contains("aspect")) {
                auto a = real_array(op["aspect"], 2, path + ".aspect");
                o.aspect_lo = a[0];
                o.aspect_hi = a[1];
            }
            if (!(o.scale_lo > 0.0 && o.scale_lo <= o.scale_hi && o.scale_hi <= 1.0))
                throw ConfigError("key '" + path + "': crop scale must satisfy 0 < lo <= hi <= 1");
            policy.ops.push_back(o);
        } else if (name == "horizontal_flip") {
            HorizontalFlipOp o;
            o.p = get_or<double>(op, {"p"}, 0.5);
            if (!(o.p >= 0.0 && o.p <= 1.0)) throw ConfigError("key '" + path + "': flip p must be in [0, 1]");
            policy.ops.push_back(o);
        } else if (name == "color_jitter") {
            ColorJitterOp o;
            o.brightness = get_or<double>(op, {"brightness"}, 0.2);
            o.contrast = get_or<double>(op, {"contrast"}, 0.2);
            o.saturation = get_or<double>(op, {"saturation"}, 0.1);
            policy.ops.push_back(o);
        } else if (name == "resize") {
            ResizeOp o;
            o.side = get_or<std::int64_t>(op, {"side"}, 32);
            if (o.side < 1) throw ConfigError("key '" + path + "': resize side must be >= 1");
            policy.ops.push_back(o);
        } else if (name == "normalize") {
            NormalizeOp o;
            if (op.contains("mean")) o.mean = real_array(op["mean"], 3, path + ".mean");
            if (op.contains("std")) o.std = real_array(op["std"], 3, path + ".std");
            for (double s : o.std)
                if (s == 0.0) throw ConfigError("key '" + path + "': normalize std must be non-zero");
            policy.ops.push_back(o);
        }
    }
    return policy;
}

json policy_to_json(const AugmentPolicy& policy) {
    json p;
    p["seed"] = policy.seed;
    p["ops"] = json::array();
    for (const auto& op : policy.ops) {
        json o;
        if (const auto* rrc = std::get_if<RandomResizedCropOp>(&op)) {
            o["op"] = "random_resized_crop";
            o["scale"] = {rrc->scale_lo, rrc->scale_hi};
            o["aspect"] = {rrc->aspect_lo, rrc->aspect_hi};
        } else if (const auto* f = std::get_if<HorizontalFlipOp>(&op)) {
            o["op"] = "horizontal_flip";
            o["p"] = f->p;
        } else if (const auto* j = std::get_if<ColorJitterOp>(&op)) {
            o["op"] = "color_jitter";
            o["brightness"] = j->brightness;
            o["contrast"] = j->contrast;
            o["saturation"] = j->saturation;
        } else if (const auto* r = std::get_if<ResizeOp>(&op)) {
            o["op"] = "resize";
            o["side"] = r->side;
        } else if (const auto* nm = std::get_if<NormalizeOp>(&op)) {
            o["op"] = "normalize";
            o["mean"] = nm->mean;
            o["std"] = nm->std;
        }
        p["ops"].push_back(o);
    }
    return p;
}

EncoderSpec encoder_from_json(const json& root, const char* role_key, EncoderSpec defaults) {
    EncoderSpec spec = defaults;
    const json* e = find(root, {"encoders", role_key});
    if (!e) return spec;
    if (e->contains("kind")) {
        const std::string kind = (*e)["kind"].get<std::string>();
        if (kind == "toy")
            spec.kind = EncoderKind::toy;
        else if (kind == "external_adapter")
            spec.kind = EncoderKind::external_adapter;
        else
            throw ConfigError("encoders." + std::string(role_key) + ".kind must be 'toy' or 'external_adapter'");
    }
    spec.seed = get_or<std::uint64_t>(*e, {"seed"}, spec.seed);
    spec.raw_dim = get_or<std::int64_t>(*e, {"raw_dim"}, spec.raw_dim);
    spec.class_cos = get_or<double>(*e, {"class_cos"}, spec.class_cos);
    spec.adapter = get_or<std::string>(*e, {"adapter"}, spec.adapter);
    if (e->contains("channels")) {
        spec.channels.clear();
        for (const auto& c : (*e)["channels"]) spec.channels.push_back(c.get<std::int64_t>());
        if (spec.channels.empty())
            throw ConfigError("encoders." + std::string(role_key) + ".channels must not be empty");
        for (auto c : spec.channels)
            if (c < 1) throw ConfigError("encoders." + std::string(role_key) + ".channels must be positive");
    }
    return spec;
}

RunConfig build_config(const json& obj) {
    validate_tree(obj, run_config_schema(), "");

    RunConfig cfg = default_run_config();
    cfg.stage = stage_from_string(get_or<std::string>(obj, {"stage"}, to_string(cfg.stage)));
    cfg.mode = stage2_mode_from_string(get_or<std::string>(obj, {"mode"}, to_string(cfg.mode)));
    cfg.epochs = get_or<std::int64_t>(obj, {"epochs"}, cfg.epochs);
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    cfg.batch_size = get_or<std::int64_t>(obj, {"batch_size"}, cfg.batch_size);
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    cfg.seed = get_or<std::uint64_t>(obj, {"seed"}, cfg.seed);
    const std::string det = get_or<std::string>(obj, {"determinism"}, "strict");
    if (det == "strict")
        cfg.determinism = DeterminismMode::strict;
    else if (det == "fast")
        cfg.determinism = DeterminismMode::fast;
    else
        throw ConfigError("determinism must be 'strict' or 'fast', got '" + det + "'");
    cfg.out_dir = get_or<std::string>(obj, {"out_dir"}, cfg.out_dir);
    cfg.prompt_template = get_or<std::string>(obj, {"prompt_template"}, cfg.prompt_template);

    cfg.optimizer.name = get_or<std::string>(obj, {"optimizer", "name"}, cfg.optimizer.name);
    if (cfg.optimizer.name != "adamw")
        throw ConfigError("optimizer.name: only 'adamw' is supported, got '" + cfg.optimizer.name + "'");
    cfg.optimizer.lr = get_or<double>(obj, {"optimizer", "lr"}, cfg.optimizer.lr);
    cfg.optimizer.weight_decay = get_or<double>(obj, {"optimizer", "weight_decay"}, cfg.optimizer.weight_decay);
    cfg.optimizer.lr_decay_interval =
        get_or<std::int64_t>(obj, {"optimizer", "lr_decay_interval"}, cfg.optimizer.lr_decay_interval);
    cfg.optimizer.lr_decay_factor =
        get_or<double>(obj, {"optimizer", "lr_decay_factor"}, cfg.optimizer.lr_decay_factor);
    if (cfg.optimizer.lr_decay_interval < 1) throw ConfigError("optimizer.lr_decay_interval must be >= 1");

    // Schedule: absent k ramps lambda 0 -> 1 over the run.
    cfg.schedule.k = get_or<double>(obj, {"schedule", "k"},
                                    ScheduleParams::linear_ramp(cfg.epochs).k);
    cfg.schedule.b = get_or<double>(obj, {"schedule", "b"}, 0.0);
    cfg.schedule.clamp_lo = get_or<double>(obj, {"schedule", "clamp_lo"}, 0.0);
    cfg.schedule.clamp_hi = get_or<double>(obj, {"schedule", "clamp_hi"}, 1.0);
    cfg.schedule.validate();

    cfg.temperature.value = get_or<double>(obj, {"losses", "T"}, 2.0);
    cfg.temperature.validate();
    cfg.kl_order = kl_order_from_string(get_or<std::string>(obj, {"losses", "kl_order"}, "as_printed"));

    cfg.data.source = get_or<std::string>(obj, {"data", "source"}, cfg.data.source);
    if (cfg.data.source != "synthetic" && cfg.data.source != "folder")
        throw ConfigError("data.source must be 'synthetic' or 'folder', got '" + cfg.data.source + "'");
    cfg.data.root = get_or<std::string>(obj, {"data", "root"}, cfg.data.root);
    if (cfg.data.source == "folder" && cfg.data.root.empty())
        throw ConfigError("data.root is required when data.source is 'folder'");
    cfg.data.synthetic.num_classes = get_or<std::int64_t>(obj, {"data", "num_classes"}, cfg.data.synthetic.num_classes);
    cfg.data.synthetic.per_class = get_or<std::int64_t>(obj, {"data", "per_class"}, cfg.data.synthetic.per_class);
    cfg.data.synthetic.image_side = get_or<std::int64_t>(obj, {"data", "image_side"}, cfg.data.synthetic.image_side);
    cfg.data.synthetic.separation = get_or<double>(obj, {"data", "separation"}, cfg.data.synthetic.separation);
    cfg.data.synthetic.seed = get_or<std::uint64_t>(obj, {"data", "seed"}, cfg.data.synthetic.seed);
    cfg.data.subsample_ratio = get_or<double>(obj, {"data", "subsample_ratio"}, cfg.data.subsample_ratio);
    if (!(cfg.data.subsample_ratio > 0.0 && cfg.data.subsample_ratio <= 1.0))
        throw ConfigError("data.subsample_ratio must be in (0, 1]");
    cfg.data.subsample_seed = get_or<std::uint64_t>(obj, {"data", "subsample_seed"}, cfg.data.subsample_seed);

    if (const json* p = find(obj, {"augment", "train"})) cfg.augment_train = policy_from_json(*p, "augment.train");
    if (const json* p = find(obj, {"augment", "eval"})) cfg.augment_eval = policy_from_json(*p, "augment.eval");

    cfg.enc_vlm_image = encoder_from_json(obj, "vlm_image", cfg.enc_vlm_image);
    cfg.enc_vlm_text = encoder_from_json(obj, "vlm_text", cfg.enc_vlm_text);
    cfg.enc_intermediate = encoder_from_json(obj, "intermediate", cfg.enc_intermediate);
    cfg.enc_student = encoder_from_json(obj, "student", cfg.enc_student);
    if (cfg.enc_vlm_image.kind == EncoderKind::toy && cfg.enc_vlm_text.kind == EncoderKind::toy &&
        cfg.enc_vlm_image.raw_dim != cfg.enc_vlm_text.raw_dim)
        throw ConfigError("encoders.vlm_image.raw_dim and encoders.vlm_text.raw_dim must match (shared f_vlm)");

    cfg.projection.dim = get_or<std::int64_t>(obj, {"projection", "dim"}, cfg.projection.dim);
    cfg.projection.hidden = get_or<std::int64_t>(obj, {"projection", "hidden"}, cfg.projection.hidden);
    cfg.projection.fit_epochs = get_or<std::int64_t>(obj, {"projection", "fit_epochs"}, cfg.projection.fit_epochs);
    cfg.projection.fit_lr = get_or<double>(obj, {"projection", "fit_lr"}, cfg.projection.fit_lr);
    cfg.projection.fit_weight_decay =
        get_or<double>(obj, {"projection", "fit_weight_decay"}, cfg.projection.fit_weight_decay);
    cfg.projection.fit_scale = get_or<double>(obj, {"projection", "fit_scale"}, cfg.projection.fit_scale);
    if (cfg.projection.dim < 1 || cfg.projection.hidden < 1)
        throw ConfigError("projection.dim and projection.hidden must be >= 1");
    if (cfg.projection.fit_epochs < 0) throw ConfigError("projection.fit_epochs must be >= 0");

    cfg.checkpoint.stage1_ref = get_or<std::string>(obj, {"checkpoint", "stage1_ref"}, "");
    cfg.checkpoint.fvlm_ref = get_or<std::string>(obj, {"checkpoint", "fvlm_ref"}, "");
    cfg.checkpoint.select = get_or<std::string>(obj, {"checkpoint", "select"}, "best");
    if (cfg.checkpoint.select != "best" && cfg.checkpoint.select != "last")
        throw ConfigError("checkpoint.select must be 'best' or 'last'");
    if (cfg.stage == Stage::stage2 && cfg.checkpoint.stage1_ref.empty())
        throw ConfigError("checkpoint.stage1_ref is required for stage2 runs");

    cfg.eval.checkpoint = get_or<std::string>(obj, {"eval", "checkpoint"}, "");
    cfg.analysis.checkpoint = get_or<std::string>(obj, {"analysis", "checkpoint"}, "");
    cfg.analysis.role = get_or<std::string>(obj, {"analysis", "role"}, cfg.analysis.role);
    cfg.analysis.split = get_or<std::string>(obj, {"analysis", "split"}, cfg.analysis.split);
    if (cfg.analysis.split != "train" && cfg.analysis.split != "test")
        throw ConfigError("analysis.split must be 'train' or 'test'");
    cfg.analysis.dump_x = get_or<std::string>(obj, {"analysis", "dump_x"}, "");
    cfg.analysis.dump_y = get_or<std::string>(obj, {"analysis", "dump_y"}, "");
    cfg.analysis.dump = get_or<std::string>(obj, {"analysis", "dump"}, "");

    cfg.snapshot_json = config_to_json(cfg);
    return cfg;
}

json json_from_file(const fs::path& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    const std::string text = os.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    json obj = json::parse(text, nullptr, false);
    if (obj.is_discarded()) throw ConfigError("malformed JSON in config file " + path.string());
    if (!obj.is_object()) throw ConfigError("config file must contain a JSON object: " + path.string());
    return obj;
}

void set_path(json& obj, const std::string& dotted, const json& value) {
    json* cur = &obj;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override key '" + dotted + "' has an empty segment");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        if (!cur->contains(key) || !(*cur)[key].is_object()) (*cur)[key] = json::object();
        cur = &(*cur)[key];
        start = dot + 1;
    }
}

void apply_overrides(json& obj, const Overrides& overrides) {
    for (const auto& [key, text] : overrides) {
        json value = json::parse(text, nullptr, false);
        if (value.is_discarded()) value = text;  // bare words become strings
        set_path(obj, key, value);
    }
}

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.enc_vlm_image = {EncoderRole::vlm_image, EncoderKind::toy, 11, 256, 0.0, {}, ""};
    cfg.enc_vlm_text = {EncoderRole::vlm_text, EncoderKind::toy, 12, 256, 0.0, {}, ""};
    cfg.enc_intermediate = {EncoderRole::intermediate, EncoderKind::toy, 13, 0, 0.0, {16, 32, 64}, ""};
    cfg.enc_student = {EncoderRole::student, EncoderKind::toy, 14, 0, 0.0, {8, 16}, ""};
    cfg.schedule = ScheduleParams::linear_ramp(cfg.epochs);
    return cfg;
}

std::pair<std::string, std::string> parse_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key=value, got '" + assignment + "'");
    return {assignment.substr(0, eq), assignment.substr(eq + 1)};
}

RunConfig parse_config(const fs::path& path, const Overrides& overrides) {
    json obj = json_from_file(path);
    apply_overrides(obj, overrides);
    return build_config(obj);
}

RunConfig parse_config_text(const std::string& json_text, const Overrides& overrides) {
    json obj = json_text.empty() ? json::object() : json::parse(json_text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
        throw ConfigError("malformed JSON config text");
    apply_overrides(obj, overrides);
    return build_config(obj);
}

std::string config_to_json(const RunConfig& cfg) {
    json obj;
    obj["stage"] = to_string(cfg.stage);
    obj["mode"] = to_string(cfg.mode);
    obj["epochs"] = cfg.epochs;
    obj["batch_size"] = cfg.batch_size;
    obj["seed"] = cfg.seed;
    obj["determinism"] = cfg.determinism == DeterminismMode::strict ? "strict" : "fast";
    obj["out_dir"] = cfg.out_dir;
    obj["prompt_template"] = cfg.prompt_template;
    obj["optimizer"] = {{"name", cfg.optimizer.name},
                        {"lr", cfg.optimizer.lr},
                        {"weight_decay", cfg.optimizer.weight_decay},
                        {"lr_decay_interval", cfg.optimizer.lr_decay_interval},
                        {"lr_decay_factor", cfg.optimizer.lr_decay_factor}};
    obj["schedule"] = {{"k", cfg.schedule.k},
                       {"b", cfg.schedule.b},
                       {"clamp_lo", cfg.schedule.clamp_lo},
                       {"clamp_hi", cfg.schedule.clamp_hi}};
    obj["losses"] = {{"T", cfg.temperature.value}, {"kl_order", to_string(cfg.kl_order)}};
    obj["data"] = {{"source", cfg.data.source},
                   {"root", cfg.data.root},
                   {"num_classes", cfg.data.synthetic.num_classes},
                   {"per_class", cfg.data.synthetic.per_class},
                   {"image_side", cfg.data.synthetic.image_side},
                   {"separation", cfg.data.synthetic.separation},
                   {"seed", cfg.data.synthetic.seed},
                   {"subsample_ratio", cfg.data.subsample_ratio},
                   {"subsample_seed", cfg.data.subsample_seed}};
    obj["augment"] = {{"train", policy_to_json(cfg.resolved_train_policy())},
                      {"eval", policy_to_json(cfg.resolved_eval_policy())}};
    const auto enc_json = [](const EncoderSpec& e) {
        json o;
        o["kind"] = e.kind == EncoderKind::toy ? "toy" : "external_adapter";
        o["seed"] = e.seed;
        if (e.raw_dim > 0) o["raw_dim"] = e.raw_dim;
        if (e.role == EncoderRole::vlm_text) o["class_cos"] = e.class_cos;
        if (!e.channels.empty()) o["channels"] = e.channels;
        if (!e.adapter.empty()) o["adapter"] = e.adapter;
        return o;
    };
    obj["encoders"] = {{"vlm_image", enc_json(cfg.enc_vlm_image)},
                       {"vlm_text", enc_json(cfg.enc_vlm_text)},
                       {"intermediate", enc_json(cfg.enc_intermediate)},
                       {"student", enc_json(cfg.enc_student)}};
    obj["projection"] = {{"dim", cfg.projection.dim},
                         {"hidden", cfg.projection.hidden},
                         {"fit_epochs", cfg.projection.fit_epochs},
                         {"fit_lr", cfg.projection.fit_lr},
                         {"fit_weight_decay", cfg.projection.fit_weight_decay},
                         {"fit_scale", cfg.projection.fit_scale}};
    obj["checkpoint"] = {{"stage1_ref", cfg.checkpoint.stage1_ref},
                         {"fvlm_ref", cfg.checkpoint.fvlm_ref},
                         {"select", cfg.checkpoint.select}};
    obj["eval"] = {{"checkpoint", cfg.eval.checkpoint}};
    obj["analysis"] = {{"checkpoint", cfg.analysis.checkpoint}, {"role", cfg.analysis.role},
                       {"split", cfg.analysis.split},           {"dump_x", cfg.analysis.dump_x},
                       {"dump_y", cfg.analysis.dump_y},         {"dump", cfg.analysis.dump}};
    return obj.dump(2);
}

void write_config_snapshot(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const fs::path path = fs::path(cfg.out_dir) / "config.resolved.json";
    std::ofstream f(path);
    if (!f) throw IoError("cannot write config snapshot " + path.string());
    f << (cfg.snapshot_json.empty() ? config_to_json(cfg) : cfg.snapshot_json) << "\n";
}

SweepSpec parse_sweep_spec(const fs::path& path, const Overrides& overrides) {
    json obj = json_from_file(path);
    if (!obj.contains("base")) throw ConfigError("sweep spec needs a 'base' config object");
    json base = obj["base"];
    if (base.is_string()) base = json_from_file(base.get<std::string>());
    if (!base.is_object()) throw ConfigError("sweep 'base' must be a config object or a file path");
    apply_overrides(base, overrides);

    SweepSpec spec;
    spec.base = build_config(base);

    std::vector<std::map<std::string, json>> deltas;
    if (obj.contains("grid")) {
        if (!obj["grid"].is_object()) throw ConfigError("sweep 'grid' must map dotted keys to value arrays");
        std::vector<std::pair<std::string, std::vector<json>>> axes;
        for (const auto& [key, values] : obj["grid"].items()) {
            if (!values.is_array() || values.empty())
                throw ConfigError("sweep grid key '" + key + "' must map to a non-empty array");
            axes.emplace_back(key, std::vector<json>(values.begin(), values.end()));
        }
        std::sort(axes.begin(), axes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<std::map<std::string, json>> expanded{{}};
        for (const auto& [key, values] : axes) {
            std::vector<std::map<std::string, json>> next;
            for (const auto& partial : expanded)
                for (const auto& v : values) {
                    auto d = partial;
                    d[key] = v;
                    next.push_back(std::move(d));
                }
            expanded = std::move(next);
        }
        for (auto& d : expanded) deltas.push_back(std::move(d));
    }
    if (obj.contains("deltas")) {
        if (!obj["deltas"].is_array()) throw ConfigError("sweep 'deltas' must be an array of objects");
        for (const auto& d : obj["deltas"]) {
            if (!d.is_object()) throw ConfigError("sweep delta entries must be objects of dotted keys");
            std::map<std::string, json> m;
            for (const auto& [k, v] : d.items()) m[k] = v;
            deltas.push_back(std::move(m));
        }
    }

    int index = 0;
    for (const auto& delta : deltas) {
        json variant = base;
        std::ostringstream name;
        name << "run_" << std::setw(3) << std::setfill('0') << index++;
        for (const auto& [key, value] : delta) {
            set_path(variant, key, value);
            std::string short_key = key;
            const auto dot = short_key.rfind('.');
            if (dot != std::string::npos) short_key = short_key.substr(dot + 1);
            std::string val = value.dump();
            val.erase(std::remove(val.begin(), val.end(), '"'), val.end());
            std::replace(val.begin(), val.end(), '/', '-');
            name << "_" << short_key << "=" << val;
        }
        SweepItem item;
        item.name = name.str();
        set_path(variant, "out_dir", (fs::path(spec.base.out_dir) / item.name).string());
        item.config = build_config(variant);
        spec.items.push_back(std::move(item));
    }
    return spec;
}

}  // namespace dait
