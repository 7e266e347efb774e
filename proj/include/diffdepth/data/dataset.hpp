#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffdepth/core/image.hpp"
#include "diffdepth/core/rng.hpp"
#include "diffdepth/depth/depth_map.hpp"
#include "diffdepth/embedding/embedding.hpp"
#include "diffdepth/io/png.hpp"
#include "diffdepth/pointcloud/pointcloud.hpp"

namespace diffdepth {

// Depth-range and storage conventions for one dataset family.
struct DatasetProfile {
    std::string name;
    double min_depth = 0.1, max_depth = 10.0;
    double depth_png_scale = 1000.0;  // raw units per meter
    std::size_t width = 640, height = 480;
};

inline DatasetProfile nyu_profile() { return {"nyu", 0.1, 10.0, 1000.0, 640, 480}; }
inline DatasetProfile kitti_profile() { return {"kitti", 0.1, 80.0, 256.0, 1240, 375}; }
inline DatasetProfile synthetic_profile(std::size_t w = 64, std::size_t h = 64) {
    return {"synthetic", 0.1, 10.0, 1000.0, w, h};
}

inline DatasetProfile profile_by_name(const std::string& name) {
    if (name == "nyu") return nyu_profile();
    if (name == "kitti") return kitti_profile();
    if (name == "synthetic") return synthetic_profile();
    throw std::invalid_argument("unknown dataset profile: " + name);
}

inline CameraIntrinsics default_intrinsics(std::size_t width, std::size_t height) {
    CameraIntrinsics k;
    k.fx = k.fy = 0.8 * static_cast<double>(width);
    k.cx = (static_cast<double>(width) - 1.0) / 2.0;
    k.cy = (static_cast<double>(height) - 1.0) / 2.0;
    return k;
}

template <typename T>
struct Sample {
    Image<T> image;
    DepthMap<T> depth;
    CameraIntrinsics intrinsics;
    std::string id;
    int dominant_class = -1;  // synthetic corpus label, -1 when unknown
};

// ---- on-disk loading (rgb/<id>.png + depth/<id>.png, 16-bit convention) ----

template <typename T>
Sample<T> load_sample(const std::string& rgb_path, const std::string& depth_path,
                      const DatasetProfile& profile) {
    namespace fs = std::filesystem;
    if (!fs::exists(rgb_path)) throw std::runtime_error("load_sample: missing " + rgb_path);
    if (!fs::exists(depth_path)) throw std::runtime_error("load_sample: missing " + depth_path);
    Sample<T> s;
    s.image = io::read_png_rgb8<T>(rgb_path);
    s.depth = load_depth_png<T>(depth_path, profile.depth_png_scale, profile.min_depth, profile.max_depth);
    if (s.image.dim(0) != s.depth.height() || s.image.dim(1) != s.depth.width())
        throw std::runtime_error("load_sample: rgb/depth dimension mismatch for " + rgb_path);
    s.intrinsics = default_intrinsics(s.image.dim(1), s.image.dim(0));
    s.id = fs::path(rgb_path).stem().string();
    return s;
}

// ---- synthetic scene model ----
// Camera at the origin, +X right, +Y down, +Z forward. The ray through pixel
// (u,v) is ((u-cx)/fx, (v-cy)/fy, 1); depth is the z coordinate of the first
// hit, which equals the ray parameter t.

enum class PrimitiveKind { plane, sphere };

struct ScenePrimitive {
    PrimitiveKind kind = PrimitiveKind::plane;
    // plane: n . p = offset, textured in the (e1, e2) tangent frame around p0
    double n[3] = {0, 0, 1};
    double offset = 1.0;
    double p0[3] = {0, 0, 1};
    double e1[3] = {1, 0, 0};
    double e2[3] = {0, 1, 0};
    double half_extent1 = 0.0, half_extent2 = 0.0;  // 0 = unbounded
    // sphere
    double center[3] = {0, 0, 2};
    double radius = 0.5;
    // texture
    double base_rgb[3] = {0.8, 0.2, 0.2};
    int pattern = 0;        // 0 solid, 1 stripes, 2 checker
    double pattern_freq = 4.0;
    int class_id = 0;
    bool background = false;
};

inline constexpr int kSyntheticClassCount = 6;

inline std::vector<std::string> synthetic_class_names() {
    std::vector<std::string> names = {"plane_red",  "plane_green",  "plane_blue",
                                      "sphere_red", "sphere_green", "sphere_blue"};
    for (std::size_t i = names.size(); i < kSemanticClasses; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "class_%03zu", i);
        names.push_back(buf);
    }
    return names;
}

struct SyntheticScene {
    std::vector<ScenePrimitive> primitives;  // first entry is the background
};

namespace detail {

inline double dot3(const double a[3], const double b[3]) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// Returns hit distance t (= depth) or +inf, plus texture coordinates.
inline double intersect(const ScenePrimitive& p, const double dir[3], double& s1, double& s2) {
    constexpr double kInf = 1e30;
    if (p.kind == PrimitiveKind::plane) {
        const double denom = dot3(p.n, dir);
        if (std::abs(denom) < 1e-12) return kInf;
        const double t = p.offset / denom;
        if (t <= 0.0) return kInf;
        const double hit[3] = {t * dir[0] - p.p0[0], t * dir[1] - p.p0[1], t * dir[2] - p.p0[2]};
        s1 = dot3(hit, p.e1);
        s2 = dot3(hit, p.e2);
        if (p.half_extent1 > 0.0 && (std::abs(s1) > p.half_extent1 || std::abs(s2) > p.half_extent2))
            return kInf;
        return t;
    }
    // sphere: |t*dir - center|^2 = r^2
    const double a = dot3(dir, dir);
    const double b = -2.0 * dot3(dir, p.center);
    const double c = dot3(p.center, p.center) - p.radius * p.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return kInf;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / (2.0 * a);
    if (t <= 0.0) t = (-b + sq) / (2.0 * a);
    if (t <= 0.0) return kInf;
    const double nx = t * dir[0] - p.center[0];
    const double ny = t * dir[1] - p.center[1];
    const double nz = t * dir[2] - p.center[2];
    s1 = std::atan2(nx, nz) * 2.0;
    s2 = std::asin(std::clamp(ny / p.radius, -1.0, 1.0)) * 2.0;
    return t;
}

inline double pattern_factor(const ScenePrimitive& p, double s1, double s2) {
    if (p.pattern == 0) return 1.0;
    const auto cell = [](double s, double f) {
        return static_cast<long long>(std::floor(s * f));
    };
    if (p.pattern == 1) return (cell(s1, p.pattern_freq) % 2 + 2) % 2 ? 0.55 : 1.0;
    return ((cell(s1, p.pattern_freq) + cell(s2, p.pattern_freq)) % 2 + 2) % 2 ? 0.55 : 1.0;
}

}  // namespace detail

// Renders the scene's exact analytic depth through pinhole intrinsics.
template <typename T>
Sample<T> render_scene(const SyntheticScene& scene, std::size_t width, std::size_t height,
                       const DatasetProfile& profile, const std::string& id) {
    const CameraIntrinsics k = default_intrinsics(width, height);
    Sample<T> s;
    s.id = id;
    s.intrinsics = k;
    s.image = Image<T>({height, width, 3});
    s.depth.values = Tensor<T>({height, width});
    s.depth.valid_mask.assign(height * width, 0);
    s.depth.min_depth = profile.min_depth;
    s.depth.max_depth = profile.max_depth;

    std::vector<std::size_t> class_pixels(kSemanticClasses, 0);
    for (std::size_t v = 0; v < height; ++v) {
        for (std::size_t u = 0; u < width; ++u) {
            const double dir[3] = {(static_cast<double>(u) - k.cx) / k.fx,
                                   (static_cast<double>(v) - k.cy) / k.fy, 1.0};
            double best_t = 1e30, best_s1 = 0, best_s2 = 0;
            const ScenePrimitive* best = nullptr;
            for (const auto& prim : scene.primitives) {
                double s1, s2;
                const double t = detail::intersect(prim, dir, s1, s2);
                if (t < best_t) {
                    best_t = t;
                    best_s1 = s1;
                    best_s2 = s2;
                    best = &prim;
                }
            }
            const std::size_t i = v * width + u;
            if (!best || best_t > profile.max_depth || best_t < profile.min_depth) {
                s.depth.values[i] = T{};
                for (std::size_t c = 0; c < 3; ++c) s.image(v, u, c) = T(0.05);
                continue;
            }
            s.depth.values[i] = static_cast<T>(best_t);
            s.depth.valid_mask[i] = 1;
            const double f = detail::pattern_factor(*best, best_s1, best_s2);
            for (std::size_t c = 0; c < 3; ++c)
                s.image(v, u, c) = static_cast<T>(std::clamp(best->base_rgb[c] * f, 0.0, 1.0));
            if (!best->background) class_pixels[best->class_id] += 1;
        }
    }
    std::size_t best_count = 0;
    for (std::size_t c = 0; c < class_pixels.size(); ++c) {
        if (class_pixels[c] > best_count) {
            best_count = class_pixels[c];
            s.dominant_class = static_cast<int>(c);
        }
    }
    return s;
}

// Deterministic random scene: a far background wall plus 1-4 big textured
// foreground primitives (tilted plane patches and spheres).
template <typename T>
Sample<T> generate_synthetic_scene(std::uint64_t seed, std::size_t width, std::size_t height,
                                   const DatasetProfile& profile) {
    if (width < 16 || height < 16)
        throw std::invalid_argument("generate_synthetic_scene: dims must be >= 16");
    Rng rng(seed);
    SyntheticScene scene;

    const double colors[3][3] = {{0.85, 0.20, 0.15}, {0.15, 0.80, 0.25}, {0.20, 0.30, 0.90}};

    ScenePrimitive bg;
    bg.kind = PrimitiveKind::plane;
    const double tilt = rng.uniform(-0.08, 0.08);
    bg.n[0] = std::sin(tilt);
    bg.n[1] = rng.uniform(-0.08, 0.08);
    bg.n[2] = 1.0;
    const double bg_z = rng.uniform(6.0, 9.0);
    bg.offset = bg.n[2] * bg_z;
    bg.p0[2] = bg_z;
    const int bg_color = static_cast<int>(rng.index(3));
    for (int c = 0; c < 3; ++c) bg.base_rgb[c] = colors[bg_color][c] * 0.45 + 0.3;
    bg.pattern = 0;
    bg.class_id = bg_color;  // plane family
    bg.background = true;
    scene.primitives.push_back(bg);

    const std::size_t n_fg = 1 + rng.index(4);
    for (std::size_t i = 0; i < n_fg; ++i) {
        ScenePrimitive p;
        const int color = static_cast<int>(rng.index(3));
        for (int c = 0; c < 3; ++c) p.base_rgb[c] = colors[color][c];
        p.pattern = static_cast<int>(rng.index(3));
        p.pattern_freq = rng.uniform(2.0, 6.0);
        if (rng.uniform() < 0.5) {
            p.kind = PrimitiveKind::plane;
            p.class_id = color;
            const double z = rng.uniform(1.5, 4.5);
            const double ax = rng.uniform(-0.5, 0.5);
            const double ay = rng.uniform(-0.5, 0.5);
            p.n[0] = std::sin(ax);
            p.n[1] = std::sin(ay);
            p.n[2] = std::cos(ax) * std::cos(ay);
            p.p0[0] = rng.uniform(-1.0, 1.0);
            p.p0[1] = rng.uniform(-0.8, 0.8);
            p.p0[2] = z;
            p.offset = detail::dot3(p.n, p.p0);
            // tangent frame: e1 orthogonal to n in the xz plane
            const double norm1 = std::sqrt(p.n[2] * p.n[2] + p.n[0] * p.n[0]);
            p.e1[0] = p.n[2] / norm1;
            p.e1[1] = 0.0;
            p.e1[2] = -p.n[0] / norm1;
            p.e2[0] = p.n[1] * p.e1[2] - p.n[2] * p.e1[1];
            p.e2[1] = p.n[2] * p.e1[0] - p.n[0] * p.e1[2];
            p.e2[2] = p.n[0] * p.e1[1] - p.n[1] * p.e1[0];
            p.half_extent1 = rng.uniform(0.8, 2.0);
            p.half_extent2 = rng.uniform(0.8, 2.0);
        } else {
            p.kind = PrimitiveKind::sphere;
            p.class_id = 3 + color;  // sphere family
            p.center[0] = rng.uniform(-1.2, 1.2);
            p.center[1] = rng.uniform(-0.9, 0.9);
            p.center[2] = rng.uniform(2.0, 5.0);
            p.radius = rng.uniform(0.5, 1.3);
        }
        scene.primitives.push_back(p);
    }

    char id[48];
    std::snprintf(id, sizeof(id), "syn_%016llx", static_cast<unsigned long long>(seed));
    return render_scene<T>(scene, width, height, profile, id);
}

// ---- deterministic corpus with 80/10/10 split by id hash ----

template <typename T>
struct Corpus {
    std::vector<Sample<T>> train, val, test;
};

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

template <typename T>
Corpus<T> corpus(const DatasetProfile& profile, std::size_t count, std::uint64_t seed,
                 std::size_t width = 0, std::size_t height = 0) {
    if (count < 10) throw std::invalid_argument("corpus: count must be >= 10");
    if (width == 0) width = profile.width;
    if (height == 0) height = profile.height;

    std::vector<Sample<T>> samples;
    samples.reserve(count);
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t scene_seed = rng.fork("scene" + std::to_string(i)).seed();
        Sample<T> s = generate_synthetic_scene<T>(scene_seed, width, height, profile);
        char id[64];
        std::snprintf(id, sizeof(id), "syn_%016llx_%04zu", static_cast<unsigned long long>(seed), i);
        s.id = id;
        samples.push_back(std::move(s));
    }

    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&samples](std::size_t a, std::size_t b) {
        const std::uint64_t ha = fnv1a64(samples[a].id), hb = fnv1a64(samples[b].id);
        return ha != hb ? ha < hb : samples[a].id < samples[b].id;
    });

    const std::size_t n_train = count * 8 / 10;
    const std::size_t n_val = count * 9 / 10 - n_train;
    Corpus<T> out;
    for (std::size_t r = 0; r < count; ++r) {
        Sample<T>& s = samples[order[r]];
        if (r < n_train)
            out.train.push_back(std::move(s));
        else if (r < n_train + n_val)
            out.val.push_back(std::move(s));
        else
            out.test.push_back(std::move(s));
    }
    return out;
}

// Materializes samples in the directory layout rgb/<id>.png, depth/<id>.png,
// profile.json; synthetic labels go to labels.json.
template <typename T>
void write_dataset_dir(const std::string& root, const std::vector<Sample<T>>& samples,
                       const DatasetProfile& profile) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(root) / "rgb");
    fs::create_directories(fs::path(root) / "depth");
    nlohmann::ordered_json labels;
    for (const auto& s : samples) {
        io::write_png_rgb8((fs::path(root) / "rgb" / (s.id + ".png")).string(), s.image);
        save_depth_png((fs::path(root) / "depth" / (s.id + ".png")).string(), s.depth,
                       profile.depth_png_scale);
        if (s.dominant_class >= 0) labels[s.id] = s.dominant_class;
    }
    nlohmann::ordered_json pj{{"name", profile.name},
                              {"min_depth", profile.min_depth},
                              {"max_depth", profile.max_depth},
                              {"depth_png_scale", profile.depth_png_scale}};
    std::ofstream(fs::path(root) / "profile.json") << pj.dump(2) << "\n";
    if (!labels.empty()) std::ofstream(fs::path(root) / "labels.json") << labels.dump(2) << "\n";
}

template <typename T>
std::vector<Sample<T>> load_dataset_dir(const std::string& root, const DatasetProfile& profile) {
    namespace fs = std::filesystem;
    const fs::path rgb_dir = fs::path(root) / "rgb";
    if (!fs::exists(rgb_dir)) throw std::runtime_error("load_dataset_dir: missing " + rgb_dir.string());
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(rgb_dir))
        if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw std::runtime_error("load_dataset_dir: empty dataset at " + root);

    nlohmann::json labels;
    if (fs::exists(fs::path(root) / "labels.json")) {
        std::ifstream in(fs::path(root) / "labels.json");
        in >> labels;
    }
    std::vector<Sample<T>> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        Sample<T> s = load_sample<T>((rgb_dir / (id + ".png")).string(),
                                     (fs::path(root) / "depth" / (id + ".png")).string(), profile);
        if (labels.contains(id)) s.dominant_class = labels[id].get<int>();
        out.push_back(std::move(s));
    }
    return out;
}

inline DatasetProfile load_profile_json(const std::string& root) {
    std::ifstream in(std::filesystem::path(root) / "profile.json");
    if (!in) throw std::runtime_error("missing profile.json under " + root);
    nlohmann::json j;
    in >> j;
    DatasetProfile p;
    p.name = j.at("name").get<std::string>();
    p.min_depth = j.at("min_depth").get<double>();
    p.max_depth = j.at("max_depth").get<double>();
    p.depth_png_scale = j.at("depth_png_scale").get<double>();
    return p;
}

}  // namespace diffdepth
