// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "dait/digest.hpp"
#include "dait/rng.hpp"

namespace fs = std::filesystem;

namespace dait {

std::vector<std::int64_t> Dataset::labels() const {
    std::vector<std::int64_t> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.label);
    return out;
}

std::int64_t Dataset::count_for_class(std::int64_t c) const {
    std::int64_t n = 0;
    for (const auto& it : items) n += (it.label == c) ? 1 : 0;
    return n;
}

// --- synthetic fixture -------------------------------------------------------

namespace {

constexpr double kPatternAmp = 0.16;
constexpr double kDistractorAmp = 0.22;
constexpr double kNoiseSigma = 0.07;
constexpr double kBrightnessJitter = 0.04;
constexpr std::int64_t kMaxShift = 2;
constexpr std::int64_t kNumDistractors = 24;

// Smooth zero-mean unit-RMS pattern: a few colored Gaussian blobs plus one
// oriented grating. Smoothness keeps nearest-mean classification robust to
// the small translations applied per sample.
Image make_pattern(std::int64_t side, Rng& rng) {
    Image p = Image::create(3, side, side);
    const int blobs = 3;
    for (int bi = 0; bi < blobs; ++bi) {
        const double cx = rng.uniform(0.2, 0.8) * static_cast<double>(side);
        const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(side);
        const double sigma = rng.uniform(static_cast<double>(side) / 6.0, static_cast<double>(side) / 4.0);
        double color[3];
        double cn = 0.0;
        for (double& v : color) {
            v = rng.normal();
            cn += v * v;
        }
        cn = std::sqrt(cn);
        for (double& v : color) v /= cn;
        for (std::int64_t y = 0; y < side; ++y)
            for (std::int64_t x = 0; x < side; ++x) {
                const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
                const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                for (std::int64_t c = 0; c < 3; ++c) p.at(c, y, x) += color[c] * g;
            }
    }
    const double theta = rng.uniform(0.0, M_PI);
    const double freq = rng.uniform(1.0, 2.5) * 2.0 * M_PI / static_cast<double>(side);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (std::int64_t y = 0; y < side; ++y)
        for (std::int64_t x = 0; x < side; ++x) {
            const double u = std::cos(theta) * static_cast<double>(x) + std::sin(theta) * static_cast<double>(y);
            const double v = 0.25 * std::cos(freq * u + phase);
            for (std::int64_t c = 0; c < 3; ++c) p.at(c, y, x) += v;
        }
    // Normalize to zero mean, unit RMS.
    double mean = 0.0;
    for (double v : p.pixels) mean += v;
    mean /= static_cast<double>(p.pixels.size());
    double rms = 0.0;
    for (double& v : p.pixels) {
        v -= mean;
        rms += v * v;
    }
    rms = std::sqrt(rms / static_cast<double>(p.pixels.size()));
    for (double& v : p.pixels) v /= rms;
    return p;
}

double shifted_lookup(const Image& p, std::int64_t c, std::int64_t y, std::int64_t x, std::int64_t dy,
                      std::int64_t dx) {
    // Circular shift keeps pattern energy constant at the borders.
    const std::int64_t h = p.height, w = p.width;
    const std::int64_t sy = ((y - dy) % h + h) % h;
    const std::int64_t sx = ((x - dx) % w + w) % w;
    return p.at(c, sy, sx);
}

}  // namespace

DatasetPair generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw ContractError("generate_synthetic: num_classes must be >= 2");
    if (spec.per_class < 2) throw ContractError("generate_synthetic: per_class must be >= 2");
    if (spec.image_side < 4) throw ContractError("generate_synthetic: image_side must be >= 4");

    const std::int64_t N = spec.num_classes, n = spec.per_class, s = spec.image_side;

    std::vector<Image> patterns;
    patterns.reserve(static_cast<std::size_t>(N));
    for (std::int64_t c = 0; c < N; ++c) {
        Rng rng(mix_seed(spec.seed, 0xC1A5500ULL + static_cast<std::uint64_t>(c)));
        patterns.push_back(make_pattern(s, rng));
    }
    std::vector<Image> distractors;
    for (std::int64_t k = 0; k < kNumDistractors; ++k) {
        Rng rng(mix_seed(spec.seed, 0xD157000ULL + static_cast<std::uint64_t>(k)));
        Image d = make_pattern(s, rng);
        // Smooth patterns share a low-dimensional subspace; project the class
        // patterns out of each distractor so nuisance structure stays label
        // orthogonal.
        for (const Image& p : patterns) {
            double dot = 0.0, pp = 0.0;
            for (std::size_t i = 0; i < d.pixels.size(); ++i) {
                dot += d.pixels[i] * p.pixels[i];
                pp += p.pixels[i] * p.pixels[i];
            }
            for (std::size_t i = 0; i < d.pixels.size(); ++i) d.pixels[i] -= (dot / pp) * p.pixels[i];
        }
        double rms = 0.0;
        for (double v : d.pixels) rms += v * v;
        rms = std::sqrt(rms / static_cast<double>(d.pixels.size()));
        if (rms > 1e-9)
            for (double& v : d.pixels) v /= rms;
        distractors.push_back(std::move(d));
    }

    int width = 1;
    for (std::int64_t v = N - 1; v >= 10; v /= 10) ++width;
    std::vector<std::string> class_names;
    for (std::int64_t c = 0; c < N; ++c) {
        std::ostringstream os;
        os << "class_";
        std::string num = std::to_string(c);
        os << std::string(static_cast<std::size_t>(width) - num.size(), '0') << num;
        class_names.push_back(os.str());
    }

    DatasetPair pair;
    pair.train.class_names = class_names;
    pair.train.split = Split::train;
    pair.test.class_names = class_names;
    pair.test.split = Split::test;

    const std::int64_t n_test = std::max<std::int64_t>(1, n / 5);
    const std::int64_t n_train = n - n_test;

    for (std::int64_t c = 0; c < N; ++c) {
        for (std::int64_t i = 0; i < n; ++i) {
            Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(c) * 1000003ULL + static_cast<std::uint64_t>(i),
                             0x5A3D1EULL));
            const std::int64_t dy = rng.uniform_int(-kMaxShift, kMaxShift);
            const std::int64_t dx = rng.uniform_int(-kMaxShift, kMaxShift);
            const auto k = static_cast<std::int64_t>(rng.uniform_index(kNumDistractors));
            const std::int64_t ey = rng.uniform_int(-kMaxShift, kMaxShift);
            const std::int64_t ex = rng.uniform_int(-kMaxShift, kMaxShift);
            const double brightness = rng.uniform(-kBrightnessJitter, kBrightnessJitter);

            DatasetItem item;
            item.label = c;
            item.image = Image::create(3, s, s);
            for (std::int64_t ch = 0; ch < 3; ++ch)
                for (std::int64_t y = 0; y < s; ++y)
                    for (std::int64_t x = 0; x < s; ++x) {
                        double v = 0.5 + brightness;
                        v += kPatternAmp * spec.separation * shifted_lookup(patterns[static_cast<std::size_t>(c)], ch, y, x, dy, dx);
                        v += kDistractorAmp * shifted_lookup(distractors[static_cast<std::size_t>(k)], ch, y, x, ey, ex);
                        v += kNoiseSigma * rng.normal();
                        item.image.at(ch, y, x) = std::clamp(v, 0.0, 1.0);
                    }
            if (i < n_train)
                pair.train.items.push_back(std::move(item));
            else
                pair.test.items.push_back(std::move(item));
        }
    }
    return pair;
}

// --- PPM io ---------------------------------------------------------------------

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image file " + path.string());
    std::string magic;
    f >> magic;
    if (magic != "P6") throw IoError("unsupported image format (want binary PPM P6): " + path.string());
    auto next_token = [&]() -> std::int64_t {
        // Skips whitespace and '#' comments.
        while (true) {
            int ch = f.peek();
            if (ch == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(ch)) {
                f.get();
            } else {
                break;
            }
        }
        std::int64_t v;
        if (!(f >> v)) throw IoError("truncated PPM header: " + path.string());
        return v;
    };
    const std::int64_t w = next_token();
    const std::int64_t h = next_token();
    const std::int64_t maxval = next_token();
    if (w < 1 || h < 1 || maxval != 255) throw IoError("unsupported PPM dimensions/maxval: " + path.string());
    f.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3));
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size()))
        throw IoError("truncated PPM pixel data: " + path.string());
    Image im = Image::create(3, h, w);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                im.at(c, y, x) = static_cast<double>(raw[static_cast<std::size_t>((y * w + x) * 3 + c)]) / 255.0;
    return im;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
    if (image.channels != 3) throw IoError("PPM export needs 3 channels: " + path.string());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write image file " + path.string());
    f << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(image.width * image.height * 3));
    for (std::int64_t y = 0; y < image.height; ++y)
        for (std::int64_t x = 0; x < image.width; ++x)
            for (std::int64_t c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                raw[static_cast<std::size_t>((y * image.width + x) * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError("failed writing image file " + path.string());
}

// --- folder layout ----------------------------------------------------------------

namespace {

std::uint64_t image_digest(const Image& im) {
    std::uint64_t h = fnv1a64(&im.channels, sizeof(im.channels));
    h = fnv1a64(&im.height, sizeof(im.height), h);
    h = fnv1a64(&im.width, sizeof(im.width), h);
    return fnv1a64(im.pixels.data(), im.pixels.size() * sizeof(double), h);
}

Dataset load_split(const fs::path& root, Split split, const std::string& split_name) {
    const fs::path dir = root / split_name;
    if (!fs::is_directory(dir)) throw IoError("missing split directory " + dir.string());
    std::vector<std::string> classes;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) classes.push_back(e.path().filename().string());
    std::sort(classes.begin(), classes.end());
    if (classes.empty()) throw IoError("no class directories under " + dir.string());

    Dataset ds;
    ds.split = split;
    ds.class_names = classes;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        const fs::path cdir = dir / classes[ci];
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(cdir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw IoError("empty class directory for class '" + classes[ci] + "' in " + dir.string());
        for (const auto& file : files) {
            DatasetItem item;
            item.label = static_cast<std::int64_t>(ci);
            item.image = read_ppm(file);
            ds.items.push_back(std::move(item));
        }
    }
    return ds;
}

}  // namespace

DatasetPair load_image_folder(const std::filesystem::path& root) {
    DatasetPair pair;
    pair.train = load_split(root, Split::train, "train");
    pair.test = load_split(root, Split::test, "test");
    if (pair.train.class_names != pair.test.class_names) {
        std::set<std::string> tr(pair.train.class_names.begin(), pair.train.class_names.end());
        std::set<std::string> te(pair.test.class_names.begin(), pair.test.class_names.end());
        std::string offender;
        for (const auto& c : tr)
            if (!te.count(c)) offender = c + " (train only)";
        for (const auto& c : te)
            if (!tr.count(c)) offender = c + " (test only)";
        throw IoError("train/test class sets differ at " + root.string() + ": " + offender);
    }
    std::set<std::uint64_t> train_hashes;
    for (const auto& it : pair.train.items) train_hashes.insert(image_digest(it.image));
    for (const auto& it : pair.test.items)
        if (train_hashes.count(image_digest(it.image)))
            throw IoError("train/test splits overlap (identical image content) at " + root.string());
    return pair;
}

void write_image_folder(const DatasetPair& data, const std::filesystem::path& root) {
    for (const auto* ds : {&data.train, &data.test}) {
        const std::string split_name = ds->split == Split::train ? "train" : "test";
        std::vector<std::int64_t> counter(ds->class_names.size(), 0);
        for (const auto& item : ds->items) {
            const fs::path dir = root / split_name / ds->class_names[static_cast<std::size_t>(item.label)];
            fs::create_directories(dir);
            std::ostringstream name;
            name << "img_" << std::setw(5) << std::setfill('0') << counter[static_cast<std::size_t>(item.label)]++
                 << ".ppm";
            write_ppm(item.image, dir / name.str());
        }
    }
}

// --- augmentation -----------------------------------------------------------------

bool AugmentPolicy::is_deterministic() const {
    for (const auto& op : ops) {
        if (std::holds_alternative<RandomResizedCropOp>(op)) return false;
        if (const auto* f = std::get_if<HorizontalFlipOp>(&op); f && f->p > 0.0) return false;
        if (std::holds_alternative<ColorJitterOp>(op)) return false;
    }
    return true;
}

std::optional<std::int64_t> AugmentPolicy::output_side() const {
    std::optional<std::int64_t> side;
    for (const auto& op : ops)
        if (const auto* r = std::get_if<ResizeOp>(&op)) side = r->side;
    return side;
}

AugmentPolicy AugmentPolicy::stage1_default(std::int64_t side) {
    AugmentPolicy p;
    p.ops = {RandomResizedCropOp{}, HorizontalFlipOp{}, ColorJitterOp{}, ResizeOp{side}, NormalizeOp{}};
    return p;
}

AugmentPolicy AugmentPolicy::eval_default(std::int64_t side) {
    AugmentPolicy p;
    p.ops = {ResizeOp{side}, NormalizeOp{}};
    return p;
}

namespace {

double bilinear(const Image& im, std::int64_t c, double sy, double sx) {
    const std::int64_t h = im.height, w = im.width;
    const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(cy)), x0 = static_cast<std::int64_t>(std::floor(cx));
    const std::int64_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = cy - static_cast<double>(y0), fx = cx - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * im.at(c, y0, x0) + fx * im.at(c, y0, x1)) +
           fy * ((1 - fx) * im.at(c, y1, x0) + fx * im.at(c, y1, x1));
}

// Resamples the axis-aligned source box [y0,y0+bh) x [x0,x0+bw) to side x side.
Image resample_box(const Image& im, double y0, double x0, double bh, double bw, std::int64_t side) {
    Image out = Image::create(im.channels, side, side);
    const double sy = bh / static_cast<double>(side);
    const double sx = bw / static_cast<double>(side);
    for (std::int64_t c = 0; c < im.channels; ++c)
        for (std::int64_t y = 0; y < side; ++y)
            for (std::int64_t x = 0; x < side; ++x)
                out.at(c, y, x) = bilinear(im, c, y0 + (static_cast<double>(y) + 0.5) * sy - 0.5,
                                           x0 + (static_cast<double>(x) + 0.5) * sx - 0.5);
    return out;
}

Image apply_rrc(const Image& im, const RandomResizedCropOp& op, Rng& rng) {
    const double area = static_cast<double>(im.height * im.width);
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * rng.uniform(op.scale_lo, op.scale_hi);
        const double aspect = std::exp(rng.uniform(std::log(op.aspect_lo), std::log(op.aspect_hi)));
        const double bw = std::sqrt(target * aspect);
        const double bh = std::sqrt(target / aspect);
        if (bw <= static_cast<double>(im.width) && bh <= static_cast<double>(im.height)) {
            const double y0 = rng.uniform(0.0, static_cast<double>(im.height) - bh);
            const double x0 = rng.uniform(0.0, static_cast<double>(im.width) - bw);
            return resample_box(im, y0, x0, bh, bw, std::min(im.height, im.width));
        }
    }
    // Fallback: center crop of the largest square.
    const double side = static_cast<double>(std::min(im.height, im.width));
    return resample_box(im, (static_cast<double>(im.height) - side) / 2.0,
                        (static_cast<double>(im.width) - side) / 2.0, side, side, std::min(im.height, im.width));
}

Image apply_flip(const Image& im) {
    Image out = Image::create(im.channels, im.height, im.width);
    for (std::int64_t c = 0; c < im.channels; ++c)
        for (std::int64_t y = 0; y < im.height; ++y)
            for (std::int64_t x = 0; x < im.width; ++x) out.at(c, y, x) = im.at(c, y, im.width - 1 - x);
    return out;
}

Image apply_jitter(const Image& im, const ColorJitterOp& op, Rng& rng) {
    Image out = im;
    const double fb = rng.uniform(std::max(0.0, 1.0 - op.brightness), 1.0 + op.brightness);
    const double fc = rng.uniform(std::max(0.0, 1.0 - op.contrast), 1.0 + op.contrast);
    const double fsat = rng.uniform(std::max(0.0, 1.0 - op.saturation), 1.0 + op.saturation);
    for (double& v : out.pixels) v *= fb;
    double mean = 0.0;
    for (double v : out.pixels) mean += v;
    mean /= static_cast<double>(out.pixels.size());
    for (double& v : out.pixels) v = mean + (v - mean) * fc;
    if (out.channels == 3) {
        for (std::int64_t y = 0; y < out.height; ++y)
            for (std::int64_t x = 0; x < out.width; ++x) {
                const double gray =
                    0.299 * out.at(0, y, x) + 0.587 * out.at(1, y, x) + 0.114 * out.at(2, y, x);
                for (std::int64_t c = 0; c < 3; ++c)
                    out.at(c, y, x) = gray + (out.at(c, y, x) - gray) * fsat;
            }
    }
    for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
    return out;
}

}  // namespace

Image augment(const Image& image, const AugmentPolicy& policy, std::uint64_t sample_seed) {
    Rng rng(mix_seed(policy.seed, sample_seed));
    Image im = image;
    for (const auto& op : policy.ops) {
        if (const auto* rrc = std::get_if<RandomResizedCropOp>(&op)) {
            im = apply_rrc(im, *rrc, rng);
        } else if (const auto* flip = std::get_if<HorizontalFlipOp>(&op)) {
            if (flip->p > 0.0 && rng.bernoulli(flip->p)) im = apply_flip(im);
        } else if (const auto* jit = std::get_if<ColorJitterOp>(&op)) {
            im = apply_jitter(im, *jit, rng);
        } else if (const auto* rs = std::get_if<ResizeOp>(&op)) {
            if (im.height != rs->side || im.width != rs->side)
                im = resample_box(im, 0.0, 0.0, static_cast<double>(im.height), static_cast<double>(im.width),
                                  rs->side);
        } else if (const auto* nm = std::get_if<NormalizeOp>(&op)) {
            if (nm->mean.size() != static_cast<std::size_t>(im.channels) || nm->std.size() != nm->mean.size())
                throw ConfigError("normalize mean/std size must match channel count");
            for (std::int64_t c = 0; c < im.channels; ++c)
                for (std::int64_t y = 0; y < im.height; ++y)
                    for (std::int64_t x = 0; x < im.width; ++x)
                        im.at(c, y, x) = (im.at(c, y, x) - nm->mean[static_cast<std::size_t>(c)]) /
                                         nm->std[static_cast<std::size_t>(c)];
        }
    }
    return im;
}

// --- subsampling ----------------------------------------------------------------------

Dataset subsample(const Dataset& dataset, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw ConfigError("subsample ratio must be in (0, 1], got " + std::to_string(ratio));
    if (ratio == 1.0) return dataset;
    std::map<std::int64_t, std::vector<std::int64_t>> per_class;
    for (std::int64_t i = 0; i < dataset.size(); ++i) per_class[dataset.items[static_cast<std::size_t>(i)].label].push_back(i);
    std::vector<std::int64_t> keep;
    for (auto& [label, idxs] : per_class) {
        const auto want = static_cast<std::int64_t>(
            std::ceil(ratio * static_cast<double>(idxs.size()) - 1e-12));
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
        rng.shuffle(idxs);
        for (std::int64_t i = 0; i < want; ++i) keep.push_back(idxs[static_cast<std::size_t>(i)]);
    }
    std::sort(keep.begin(), keep.end());
    Dataset out;
    out.class_names = dataset.class_names;
    out.split = dataset.split;
    out.items.reserve(keep.size());
    for (std::int64_t i : keep) out.items.push_back(dataset.items[static_cast<std::size_t>(i)]);
    return out;
}

// --- batching ----------------------------------------------------------------------------

Tensor batch_to_tensor(const Dataset& dataset, const std::vector<std::int64_t>& indices,
                       const AugmentPolicy& policy, std::uint64_t epoch_seed) {
    if (indices.empty()) throw ContractError("batch_to_tensor: empty batch");
    const auto side = policy.output_side();
    std::vector<Image> images;
    images.reserve(indices.size());
    for (std::int64_t idx : indices) {
        const auto& item = dataset.items.at(static_cast<std::size_t>(idx));
        images.push_back(augment(item.image, policy, mix_seed(epoch_seed, static_cast<std::uint64_t>(idx))));
    }
    const std::int64_t C = images[0].channels;
    const std::int64_t S = side.value_or(images[0].height);
    Tensor out({static_cast<std::int64_t>(images.size()), C, S, S});
    for (std::size_t b = 0; b < images.size(); ++b) {
        const auto& im = images[b];
        if (im.channels != C || im.height != S || im.width != S)
            throw ContractError("batch_to_tensor: inconsistent image shapes after augmentation");
        std::copy(im.pixels.begin(), im.pixels.end(), out.data() + static_cast<std::int64_t>(b) * C * S * S);
    }
    return out;
}

std::vector<std::int64_t> batch_labels(const Dataset& dataset, const std::vector<std::int64_t>& indices) {
    std::vector<std::int64_t> out;
    out.reserve(indices.size());
    for (std::int64_t idx : indices) out.push_back(dataset.items.at(static_cast<std::size_t>(idx)).label);
    return out;
}

}  // namespace dait
