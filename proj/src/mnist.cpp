#include "cimsim/mnist.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cimsim/errors.hpp"

namespace cimsim {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) raise(Errc::TruncatedFile, "idx: truncated " + what);
    return (static_cast<std::uint32_t>(b[0]) << 24) |
           (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | b[3];
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>((v >> 24) & 0xFF),
                       static_cast<char>((v >> 16) & 0xFF),
                       static_cast<char>((v >> 8) & 0xFF),
                       static_cast<char>(v & 0xFF)};
    out.write(b, 4);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) raise(Errc::IoError, "cannot open " + images_path);
    if (read_u32_be(img, "image magic") != kImagesMagic) {
        raise(Errc::BadMagic, "idx: bad image magic in " + images_path);
    }
    const std::uint32_t count = read_u32_be(img, "image count");
    const std::uint32_t rows = read_u32_be(img, "rows");
    const std::uint32_t cols = read_u32_be(img, "cols");

    Dataset data;
    data.rows = static_cast<int>(rows);
    data.cols = static_cast<int>(cols);
    data.images.resize(static_cast<std::size_t>(count) * rows * cols);
    img.read(reinterpret_cast<char*>(data.images.data()),
             static_cast<std::streamsize>(data.images.size()));
    if (img.gcount() != static_cast<std::streamsize>(data.images.size())) {
        raise(Errc::TruncatedFile, "idx: image payload shorter than header claims");
    }

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) raise(Errc::IoError, "cannot open " + labels_path);
    if (read_u32_be(lab, "label magic") != kLabelsMagic) {
        raise(Errc::BadMagic, "idx: bad label magic in " + labels_path);
    }
    const std::uint32_t label_count = read_u32_be(lab, "label count");
    if (label_count != count) {
        raise(Errc::ShapeMismatch, "idx: image/label count mismatch");
    }
    data.labels.resize(label_count);
    lab.read(reinterpret_cast<char*>(data.labels.data()),
             static_cast<std::streamsize>(label_count));
    if (lab.gcount() != static_cast<std::streamsize>(label_count)) {
        raise(Errc::TruncatedFile, "idx: label payload shorter than header claims");
    }
    return data;
}

void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    if (!img) raise(Errc::IoError, "cannot open " + images_path + " for writing");
    write_u32_be(img, kImagesMagic);
    write_u32_be(img, static_cast<std::uint32_t>(data.size()));
    write_u32_be(img, static_cast<std::uint32_t>(data.rows));
    write_u32_be(img, static_cast<std::uint32_t>(data.cols));
    img.write(reinterpret_cast<const char*>(data.images.data()),
              static_cast<std::streamsize>(data.images.size()));

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) raise(Errc::IoError, "cannot open " + labels_path + " for writing");
    write_u32_be(lab, kLabelsMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(data.size()));
    lab.write(reinterpret_cast<const char*>(data.labels.data()),
              static_cast<std::streamsize>(data.labels.size()));
    if (!img || !lab) raise(Errc::IoError, "idx: write failed");
}

Dataset load_idx_dir(const std::string& dir, bool train) {
    const std::string stem = train ? "train" : "t10k";
    return load_idx(dir + "/" + stem + "-images-idx3-ubyte",
                    dir + "/" + stem + "-labels-idx1-ubyte");
}

bool idx_dir_present(const std::string& dir) {
    namespace fs = std::filesystem;
    for (const char* stem : {"train", "t10k"}) {
        if (!fs::exists(dir + "/" + std::string(stem) + "-images-idx3-ubyte") ||
            !fs::exists(dir + "/" + std::string(stem) + "-labels-idx1-ubyte")) {
            return false;
        }
    }
    return true;
}

Dataset subset(const Dataset& data, std::size_t n, Rng rng) {
    if (n > data.size()) {
        raise(Errc::OutOfRange, "subset: requested more samples than the dataset has");
    }
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = data.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
    }
    Dataset out;
    out.rows = data.rows;
    out.cols = data.cols;
    const std::size_t px = static_cast<std::size_t>(data.rows) * data.cols;
    out.images.resize(n * px);
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(data.image(idx[i]), px, out.images.begin() + static_cast<std::ptrdiff_t>(i * px));
        out.labels[i] = data.labels[idx[i]];
    }
    return out;
}

namespace {

struct Segment {
    double x0, y0, x1, y1;
};

// Digit strokes on a unit box (y grows downward).
std::vector<Segment> digit_strokes(int digit) {
    auto arc = [](double cx, double cy, double rx, double ry, double a0, double a1,
                  int steps) {
        std::vector<Segment> segs;
        double px = cx + rx * std::cos(a0);
        double py = cy + ry * std::sin(a0);
        for (int i = 1; i <= steps; ++i) {
            const double a = a0 + (a1 - a0) * i / steps;
            const double nx = cx + rx * std::cos(a);
            const double ny = cy + ry * std::sin(a);
            segs.push_back({px, py, nx, ny});
            px = nx;
            py = ny;
        }
        return segs;
    };
    const double pi = 3.14159265358979323846;
    std::vector<Segment> s;
    auto append = [&s](const std::vector<Segment>& more) {
        s.insert(s.end(), more.begin(), more.end());
    };
    switch (digit) {
        case 0:
            append(arc(0.5, 0.5, 0.32, 0.42, 0.0, 2.0 * pi, 12));
            break;
        case 1:
            s.push_back({0.35, 0.25, 0.55, 0.08});
            s.push_back({0.55, 0.08, 0.55, 0.92});
            break;
        case 2:
            append(arc(0.5, 0.3, 0.3, 0.22, -pi, 0.35, 7));
            s.push_back({0.78, 0.42, 0.22, 0.92});
            s.push_back({0.22, 0.92, 0.8, 0.92});
            break;
        case 3:
            append(arc(0.45, 0.3, 0.3, 0.22, -pi, 0.5 * pi, 8));
            append(arc(0.45, 0.72, 0.32, 0.22, -0.5 * pi, pi, 8));
            break;
        case 4:
            s.push_back({0.62, 0.08, 0.2, 0.62});
            s.push_back({0.2, 0.62, 0.85, 0.62});
            s.push_back({0.62, 0.08, 0.62, 0.92});
            break;
        case 5:
            s.push_back({0.75, 0.1, 0.3, 0.1});
            s.push_back({0.3, 0.1, 0.28, 0.45});
            append(arc(0.48, 0.66, 0.26, 0.24, -0.6 * pi, 0.75 * pi, 9));
            break;
        case 6:
            append(arc(0.55, 0.3, 0.35, 0.5, -0.75 * pi, -0.5 * pi, 4));
            s.push_back({0.26, 0.25, 0.24, 0.68});
            append(arc(0.48, 0.68, 0.24, 0.22, -pi, pi, 10));
            break;
        case 7:
            s.push_back({0.2, 0.1, 0.8, 0.1});
            s.push_back({0.8, 0.1, 0.42, 0.92});
            break;
        case 8:
            append(arc(0.5, 0.3, 0.26, 0.2, 0.0, 2.0 * pi, 10));
            append(arc(0.5, 0.72, 0.3, 0.22, 0.0, 2.0 * pi, 10));
            break;
        case 9:
            append(arc(0.5, 0.32, 0.26, 0.22, 0.0, 2.0 * pi, 10));
            s.push_back({0.76, 0.32, 0.7, 0.92});
            break;
        default:
            break;
    }
    return s;
}

double point_segment_dist(double px, double py, const Segment& s) {
    const double dx = s.x1 - s.x0;
    const double dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 == 0.0 ? 0.0 : ((px - s.x0) * dx + (py - s.y0) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = s.x0 + t * dx;
    const double cy = s.y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

} // namespace

Dataset synth_digits(std::size_t n, Rng rng) {
    Dataset data;
    data.rows = 28;
    data.cols = 28;
    data.images.resize(n * 28 * 28);
    data.labels.resize(n);

    std::vector<std::vector<Segment>> glyphs;
    glyphs.reserve(10);
    for (int d = 0; d < 10; ++d) glyphs.push_back(digit_strokes(d));

    for (std::size_t i = 0; i < n; ++i) {
        Rng sample_rng = rng.substream(i);
        const int label = sample_rng.uniform_int(10);
        data.labels[i] = static_cast<std::uint8_t>(label);

        const double angle = (sample_rng.uniform() - 0.5) * 0.36;
        const double scale = 0.82 + 0.28 * sample_rng.uniform();
        const double tx = (sample_rng.uniform() - 0.5) * 5.0;
        const double ty = (sample_rng.uniform() - 0.5) * 5.0;
        const double thickness = (1.15 + 0.8 * sample_rng.uniform()) / 28.0;
        const double peak = 175.0 + 80.0 * sample_rng.uniform();
        const double ca = std::cos(angle), sa = std::sin(angle);

        std::uint8_t* img = data.images.data() + i * 28 * 28;
        for (int y = 0; y < 28; ++y) {
            for (int x = 0; x < 28; ++x) {
                // Map the pixel back into glyph space.
                const double gx0 = (x + 0.5 - 14.0 - tx) / (20.0 * scale);
                const double gy0 = (y + 0.5 - 14.0 - ty) / (20.0 * scale);
                const double gx = ca * gx0 + sa * gy0 + 0.5;
                const double gy = -sa * gx0 + ca * gy0 + 0.5;
                double dist = 1e9;
                for (const auto& seg : glyphs[static_cast<std::size_t>(label)]) {
                    dist = std::min(dist, point_segment_dist(gx, gy, seg));
                }
                double v = 0.0;
                if (dist < thickness) {
                    v = peak;
                } else if (dist < thickness * 2.0) {
                    v = peak * (2.0 - dist / thickness);
                }
                v += sample_rng.gaussian() * 9.0;
                img[y * 28 + x] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    }
    return data;
}

} // namespace cimsim
