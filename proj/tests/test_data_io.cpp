#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "es/augment.hpp"
#include "es/data_io.hpp"
#include "es/datagen.hpp"
#include "es/rng.hpp"

using namespace es;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "es_data_io_tests";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::uint32_t be32_at(const fs::path& p, std::size_t offset) {
    std::ifstream f(p, std::ios::binary);
    f.seekg(static_cast<std::streamoff>(offset));
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    REQUIRE(bool(f));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

} // namespace

TEST_CASE("IDX round trip and independent header check") {
    LabeledDataset ds = make_digit_corpus(120, 7);
    const fs::path img = tmp_dir() / "t1-images-idx3-ubyte";
    const fs::path lbl = tmp_dir() / "t1-labels-idx1-ubyte";
    save_idx_corpus(ds, img.string(), lbl.string());

    // Header fields read independently of the parser.
    CHECK(be32_at(img, 0) == 0x00000803u);
    CHECK(be32_at(img, 4) == 120u);
    CHECK(be32_at(img, 8) == 28u);
    CHECK(be32_at(img, 12) == 28u);
    CHECK(be32_at(lbl, 0) == 0x00000801u);
    CHECK(be32_at(lbl, 4) == 120u);

    LabeledDataset back = load_idx_corpus(img.string(), lbl.string());
    CHECK(back.count() == 120);
    CHECK(back.class_count == 10);
    CHECK(back.labels == ds.labels);
    CHECK(back.images.v.minCoeff() >= 0.0f);
    CHECK(back.images.v.maxCoeff() <= 1.0f);
    // 8-bit quantization on the way out.
    CHECK((back.images.v - ds.images.v).abs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("IDX zero-item pair loads as an empty dataset") {
    LabeledDataset empty = LabeledDataset::empty_like(1, 28, 28, 10, LabeledDataset::Role::original);
    const fs::path img = tmp_dir() / "t2-images";
    const fs::path lbl = tmp_dir() / "t2-labels";
    save_idx_corpus(empty, img.string(), lbl.string());
    LabeledDataset back = load_idx_corpus(img.string(), lbl.string());
    CHECK(back.count() == 0);
}

TEST_CASE("IDX count mismatch and bad magic are rejected") {
    LabeledDataset ds = make_digit_corpus(10, 3);
    const fs::path img = tmp_dir() / "t3-images";
    const fs::path lbl = tmp_dir() / "t3-labels";
    save_idx_corpus(ds, img.string(), lbl.string());

    LabeledDataset fewer = ds.subset({0, 1, 2, 3, 4, 5, 6, 7, 8});
    const fs::path lbl9 = tmp_dir() / "t3-labels9";
    save_idx_corpus(fewer, (tmp_dir() / "t3-img9").string(), lbl9.string());
    CHECK_THROWS_AS(load_idx_corpus(img.string(), lbl9.string()), ConsistencyError);

    const fs::path corrupt = tmp_dir() / "t3-corrupt";
    fs::copy_file(img, corrupt, fs::copy_options::overwrite_existing);
    std::fstream f(corrupt, std::ios::binary | std::ios::in | std::ios::out);
    f.put('\x09');
    f.close();
    CHECK_THROWS_AS(load_idx_corpus(corrupt.string(), lbl.string()), FormatError);
}

TEST_CASE("CIFAR batches parse and reject malformed input") {
    const fs::path batch = tmp_dir() / "cifar_batch.bin";
    {
        std::ofstream f(batch, std::ios::binary);
        Rng rng(5);
        for (int rec = 0; rec < 7; ++rec) {
            unsigned char label = static_cast<unsigned char>(rec % 10);
            f.write(reinterpret_cast<char*>(&label), 1);
            for (int i = 0; i < 3072; ++i) {
                unsigned char b = static_cast<unsigned char>(rng.below(256));
                f.write(reinterpret_cast<char*>(&b), 1);
            }
        }
    }
    LabeledDataset ds = load_cifar_corpus({batch.string()});
    CHECK(ds.count() == 7);
    CHECK(ds.images.shape == Shape{7, 3, 32, 32});
    {
        std::ifstream f(batch, std::ios::binary | std::ios::ate);
        CHECK(static_cast<std::size_t>(f.tellg()) / 3073 == 7); // independent record count
    }

    const fs::path empty = tmp_dir() / "cifar_empty.bin";
    std::ofstream(empty, std::ios::binary).flush();
    CHECK(load_cifar_corpus({empty.string()}).count() == 0);

    const fs::path truncated = tmp_dir() / "cifar_short.bin";
    {
        std::ofstream f(truncated, std::ios::binary);
        for (int i = 0; i < 3072; ++i) f.put('\0');
    }
    CHECK_THROWS_AS(load_cifar_corpus({truncated.string()}), FormatError);

    const fs::path badlabel = tmp_dir() / "cifar_badlabel.bin";
    {
        std::ofstream f(badlabel, std::ios::binary);
        f.put('\x0b');
        for (int i = 0; i < 3072; ++i) f.put('\0');
    }
    CHECK_THROWS_AS(load_cifar_corpus({badlabel.string()}), LabelError);
}

TEST_CASE("expanded dataset container round-trips bit-identically") {
    LabeledDataset ds = make_digit_corpus(33, 11, LabeledDataset::Role::expanded);
    const fs::path path = tmp_dir() / "x.exps";
    save_expanded(ds, path.string());
    LabeledDataset back = load_expanded(path.string());
    CHECK(back.count() == ds.count());
    CHECK(back.class_count == ds.class_count);
    CHECK(back.labels == ds.labels);
    CHECK(std::memcmp(back.images.v.data(), ds.images.v.data(),
                      static_cast<std::size_t>(ds.images.v.size()) * 4) == 0);

    LabeledDataset empty = LabeledDataset::empty_like(1, 28, 28, 10, LabeledDataset::Role::expanded);
    const fs::path epath = tmp_dir() / "empty.exps";
    save_expanded(empty, epath.string());
    CHECK(load_expanded(epath.string()).count() == 0);

    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.put('X');
    f.close();
    CHECK_THROWS_AS(load_expanded(path.string()), FormatError);
}

TEST_CASE("sample_per_class partitions the corpus deterministically") {
    LabeledDataset corpus = make_digit_corpus(400, 21);
    SamplePlan plan{10, 99, {}};
    auto [x, rem] = sample_per_class(corpus, plan);
    CHECK(x.count() == 100);
    CHECK(rem.count() == 300);
    auto by_class = x.indices_by_class();
    for (const auto& pool : by_class) CHECK(pool.size() == 10);

    // Partition: every corpus item lands on exactly one side.
    auto [x2, rem2] = sample_per_class(corpus, plan);
    CHECK(x2.checksum() == x.checksum());
    CHECK(rem2.checksum() == rem.checksum());
    LabeledDataset all = LabeledDataset::concat(x, rem, LabeledDataset::Role::original);
    CHECK(all.count() == corpus.count());
    // Pixel mass is preserved by the split (index-disjoint reordering).
    CHECK(std::abs(static_cast<double>(all.images.v.sum()) - static_cast<double>(corpus.images.v.sum())) < 1e-1);

    SamplePlan other{10, 100, {}};
    CHECK(sample_per_class(corpus, other).selected.checksum() != x.checksum());

    SamplePlan too_many{41, 1, {}};
    CHECK_THROWS_AS(sample_per_class(corpus, too_many), CapacityError);
}

TEST_CASE("sample_per_class boundary: per_class equal to full class size") {
    LabeledDataset corpus = make_digit_corpus(50, 2);
    SamplePlan plan{5, 7, {}};
    auto [x, rem] = sample_per_class(corpus, plan);
    CHECK(x.count() == 50);
    CHECK(rem.count() == 0);
}

TEST_CASE("classical augmentation scales per-class counts exactly") {
    LabeledDataset x = make_digit_corpus(40, 31);
    LabeledDataset out = classical_augment(x, 10, 5);
    CHECK(out.count() == 400);
    auto before = x.indices_by_class();
    auto after = out.indices_by_class();
    for (int c = 0; c < 10; ++c) CHECK(after[static_cast<std::size_t>(c)].size() == 10 * before[static_cast<std::size_t>(c)].size());
    // Originals appear once, as the leading block.
    CHECK((out.images.v.head(x.images.v.size()) == x.images.v).all());

    LabeledDataset same = classical_augment(x, 1, 5);
    CHECK(same.count() == x.count());
    CHECK((same.images.v == x.images.v).all());

    CHECK_THROWS_AS(classical_augment(x, 0, 5), ParamError);
}

TEST_CASE("augmenting an all-zero image stays within the brightness bound") {
    LabeledDataset x = LabeledDataset::empty_like(1, 28, 28, 10, LabeledDataset::Role::original);
    x.images = Tensor::zeros({1, 1, 28, 28});
    x.labels = {3};
    LabeledDataset out = classical_augment(x, 8, 17);
    CHECK(out.images.v.maxCoeff() <= 0.1f + 1e-6f);
    CHECK(out.images.v.minCoeff() >= 0.0f);
}

TEST_CASE("generated corpus is balanced, bounded and reproducible") {
    LabeledDataset a = make_digit_corpus(200, 77);
    LabeledDataset b = make_digit_corpus(200, 77);
    CHECK(a.checksum() == b.checksum());
    a.validate();
    auto by_class = a.indices_by_class();
    for (const auto& pool : by_class) CHECK(pool.size() == 20);
    CHECK(make_digit_corpus(200, 78).checksum() != a.checksum());
}
