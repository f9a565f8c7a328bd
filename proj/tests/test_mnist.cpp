#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "cimsim/errors.hpp"
#include "cimsim/mnist.hpp"

using namespace cimsim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cimsim_test_" + std::to_string(counter()++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str(const char* name) const { return (path / name).string(); }
};

} // namespace

TEST_SUITE("mnist") {

TEST_CASE("idx round trip preserves header and payload") {
    TempDir tmp;
    const Dataset data = synth_digits(64, Rng(1));
    save_idx(data, tmp.str("img"), tmp.str("lab"));

    // Header oracle: big-endian magic and dimensions, byte by byte.
    std::ifstream in(tmp.str("img"), std::ios::binary);
    unsigned char header[16];
    in.read(reinterpret_cast<char*>(header), 16);
    CHECK(header[0] == 0x00);
    CHECK(header[1] == 0x00);
    CHECK(header[2] == 0x08);
    CHECK(header[3] == 0x03);
    CHECK((header[4] << 24 | header[5] << 16 | header[6] << 8 | header[7]) == 64);
    CHECK((header[12] << 24 | header[13] << 16 | header[14] << 8 | header[15]) == 28);

    const Dataset loaded = load_idx(tmp.str("img"), tmp.str("lab"));
    CHECK(loaded.size() == data.size());
    CHECK(loaded.images == data.images);
    CHECK(loaded.labels == data.labels);
}

TEST_CASE("bad magic is rejected") {
    TempDir tmp;
    const Dataset data = synth_digits(4, Rng(2));
    save_idx(data, tmp.str("img"), tmp.str("lab"));

    // Corrupt the image magic.
    std::fstream f(tmp.str("img"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(2);
    f.put(static_cast<char>(0x07));
    f.close();
    try {
        load_idx(tmp.str("img"), tmp.str("lab"));
        FAIL("expected BadMagic");
    } catch (const SimError& e) {
        CHECK(e.code() == Errc::BadMagic);
    }
}

TEST_CASE("truncated files are rejected") {
    TempDir tmp;
    const Dataset data = synth_digits(8, Rng(3));
    save_idx(data, tmp.str("img"), tmp.str("lab"));

    std::ifstream in(tmp.str("img"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(tmp.str("img"), std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 100));
    out.close();
    try {
        load_idx(tmp.str("img"), tmp.str("lab"));
        FAIL("expected TruncatedFile");
    } catch (const SimError& e) {
        CHECK(e.code() == Errc::TruncatedFile);
    }
}

TEST_CASE("label/image count mismatch is rejected") {
    TempDir tmp;
    const Dataset a = synth_digits(8, Rng(4));
    const Dataset b = synth_digits(4, Rng(5));
    save_idx(a, tmp.str("img"), tmp.str("lab_unused"));
    save_idx(b, tmp.str("img_unused"), tmp.str("lab"));
    CHECK_THROWS_AS(load_idx(tmp.str("img"), tmp.str("lab")), SimError);
}

TEST_CASE("subset selection is deterministic and bounded") {
    const Dataset data = synth_digits(100, Rng(6));
    const Dataset s1 = subset(data, 20, Rng(7));
    const Dataset s2 = subset(data, 20, Rng(7));
    CHECK(s1.images == s2.images);
    CHECK(s1.labels == s2.labels);
    const Dataset s3 = subset(data, 20, Rng(8));
    CHECK(s1.images != s3.images);
    CHECK_THROWS_AS(subset(data, 101, Rng(9)), SimError);
}

TEST_CASE("synthetic digits cover all classes deterministically") {
    const Dataset a = synth_digits(500, Rng(10));
    const Dataset b = synth_digits(500, Rng(10));
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);

    std::set<int> seen(a.labels.begin(), a.labels.end());
    CHECK(seen.size() == 10);
    for (int label : seen) {
        CHECK(label >= 0);
        CHECK(label <= 9);
    }

    // Images carry actual strokes, not noise-only frames.
    int bright = 0;
    for (auto px : a.images) bright += px > 128;
    CHECK(bright > 500 * 20);
}

TEST_CASE("directory helpers locate the standard file names") {
    TempDir tmp;
    CHECK(!idx_dir_present(tmp.path.string()));
    const Dataset train = synth_digits(8, Rng(11));
    const Dataset test = synth_digits(4, Rng(12));
    save_idx(train, tmp.str("train-images-idx3-ubyte"), tmp.str("train-labels-idx1-ubyte"));
    save_idx(test, tmp.str("t10k-images-idx3-ubyte"), tmp.str("t10k-labels-idx1-ubyte"));
    CHECK(idx_dir_present(tmp.path.string()));
    CHECK(load_idx_dir(tmp.path.string(), true).size() == 8);
    CHECK(load_idx_dir(tmp.path.string(), false).size() == 4);
}

} // TEST_SUITE
