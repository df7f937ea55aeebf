#include "es/data_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace es {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803u;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801u;

std::uint32_t read_be_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError(std::string("truncated IDX header while reading ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be_u32(std::ostream& os, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x >> 24), static_cast<unsigned char>(x >> 16),
                          static_cast<unsigned char>(x >> 8), static_cast<unsigned char>(x)};
    os.write(reinterpret_cast<char*>(b), 4);
}

template <class T>
void put_le(std::ostream& os, T x) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(x) >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const char* what) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw FormatError(std::string("truncated file while reading ") + what);
    std::uint64_t x = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) x |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(x);
}

constexpr char kExpsMagic[4] = {'E', 'X', 'P', 'S'};
constexpr std::uint16_t kExpsVersion = 1;

} // namespace

LabeledDataset load_idx_corpus(const std::string& image_path, const std::string& label_path) {
    std::ifstream imf(image_path, std::ios::binary);
    if (!imf) throw FormatError("cannot open IDX image file: " + image_path);
    if (const auto magic = read_be_u32(imf, "image magic"); magic != kIdxImageMagic)
        throw FormatError("bad IDX image magic in " + image_path);
    const std::uint32_t count = read_be_u32(imf, "image count");
    const std::uint32_t rows = read_be_u32(imf, "rows");
    const std::uint32_t cols = read_be_u32(imf, "cols");

    std::ifstream lbf(label_path, std::ios::binary);
    if (!lbf) throw FormatError("cannot open IDX label file: " + label_path);
    if (const auto magic = read_be_u32(lbf, "label magic"); magic != kIdxLabelMagic)
        throw FormatError("bad IDX label magic in " + label_path);
    const std::uint32_t label_count = read_be_u32(lbf, "label count");
    if (label_count != count)
        throw ConsistencyError("IDX pair mismatch: " + std::to_string(count) + " images vs " +
                               std::to_string(label_count) + " labels");

    LabeledDataset ds;
    ds.images = Tensor::zeros({static_cast<int>(count), 1, static_cast<int>(rows), static_cast<int>(cols)});
    ds.labels.resize(count);
    const std::size_t item = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(item);
    for (std::uint32_t i = 0; i < count; ++i) {
        imf.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(item));
        if (!imf) throw FormatError("truncated IDX image payload at item " + std::to_string(i));
        float* dst = ds.images.v.data() + static_cast<std::int64_t>(i) * static_cast<std::int64_t>(item);
        for (std::size_t p = 0; p < item; ++p) dst[p] = static_cast<float>(buf[p]) / 255.0f;
    }
    int max_label = -1;
    for (std::uint32_t i = 0; i < count; ++i) {
        unsigned char l;
        lbf.read(reinterpret_cast<char*>(&l), 1);
        if (!lbf) throw FormatError("truncated IDX label payload at item " + std::to_string(i));
        ds.labels[i] = l;
        max_label = std::max(max_label, static_cast<int>(l));
    }
    ds.class_count = max_label + 1;
    ds.validate();
    return ds;
}

void save_idx_corpus(const LabeledDataset& ds, const std::string& image_path, const std::string& label_path) {
    if (ds.count() > 0 && ds.channels() != 1) throw ParamError("IDX export supports single-channel images only");
    std::ofstream imf(image_path, std::ios::binary);
    if (!imf) throw FormatError("cannot open for writing: " + image_path);
    write_be_u32(imf, kIdxImageMagic);
    write_be_u32(imf, static_cast<std::uint32_t>(ds.count()));
    write_be_u32(imf, static_cast<std::uint32_t>(ds.count() ? ds.height() : 0));
    write_be_u32(imf, static_cast<std::uint32_t>(ds.count() ? ds.width() : 0));
    const std::int64_t item = ds.count() ? ds.item_size() : 0;
    for (int i = 0; i < ds.count(); ++i)
        for (std::int64_t p = 0; p < item; ++p) {
            const float x = ds.images.v[static_cast<Eigen::Index>(i) * item + p];
            const int q = static_cast<int>(x * 255.0f + 0.5f);
            const unsigned char b = static_cast<unsigned char>(std::clamp(q, 0, 255));
            imf.write(reinterpret_cast<const char*>(&b), 1);
        }
    std::ofstream lbf(label_path, std::ios::binary);
    if (!lbf) throw FormatError("cannot open for writing: " + label_path);
    write_be_u32(lbf, kIdxLabelMagic);
    write_be_u32(lbf, static_cast<std::uint32_t>(ds.count()));
    for (int l : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(l);
        lbf.write(reinterpret_cast<const char*>(&b), 1);
    }
}

LabeledDataset load_cifar_corpus(const std::vector<std::string>& batch_paths) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::int64_t kPixels = 3 * 32 * 32;
    std::vector<std::pair<std::string, std::size_t>> sizes;
    std::size_t total = 0;
    for (const auto& path : batch_paths) {
        std::ifstream f(path, std::ios::binary | std::ios::ate);
        if (!f) throw FormatError("cannot open CIFAR batch: " + path);
        const auto bytes = static_cast<std::size_t>(f.tellg());
        if (bytes % kRecord != 0)
            throw FormatError("CIFAR batch length " + std::to_string(bytes) + " not a multiple of 3073: " + path);
        sizes.emplace_back(path, bytes / kRecord);
        total += bytes / kRecord;
    }
    LabeledDataset ds;
    ds.images = Tensor::zeros({static_cast<int>(total), 3, 32, 32});
    ds.labels.resize(total);
    ds.class_count = 10;
    std::size_t item = 0;
    std::vector<unsigned char> rec(kRecord);
    for (const auto& [path, n] : sizes) {
        std::ifstream f(path, std::ios::binary);
        for (std::size_t r = 0; r < n; ++r, ++item) {
            f.read(reinterpret_cast<char*>(rec.data()), kRecord);
            if (!f) throw FormatError("truncated CIFAR record in " + path);
            if (rec[0] >= 10) throw LabelError("CIFAR label byte " + std::to_string(rec[0]) + " >= 10 in " + path);
            ds.labels[item] = rec[0];
            float* dst = ds.images.v.data() + static_cast<std::int64_t>(item) * kPixels;
            for (std::int64_t p = 0; p < kPixels; ++p) dst[p] = static_cast<float>(rec[1 + p]) / 255.0f;
        }
    }
    if (total == 0) ds.class_count = 0;
    ds.validate();
    return ds;
}

void save_expanded(const LabeledDataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f.write(kExpsMagic, 4);
    put_le<std::uint16_t>(f, kExpsVersion);
    put_le<std::uint16_t>(f, static_cast<std::uint16_t>(ds.class_count));
    put_le<std::uint64_t>(f, static_cast<std::uint64_t>(ds.count()));
    put_le<std::uint16_t>(f, static_cast<std::uint16_t>(ds.channels()));
    put_le<std::uint16_t>(f, static_cast<std::uint16_t>(ds.height()));
    put_le<std::uint16_t>(f, static_cast<std::uint16_t>(ds.width()));
    put_le<std::uint8_t>(f, 0); // f32 little-endian payload
    for (int l : ds.labels) put_le<std::uint16_t>(f, static_cast<std::uint16_t>(l));
    for (Eigen::Index i = 0; i < ds.images.v.size(); ++i) {
        std::uint32_t u;
        std::memcpy(&u, &ds.images.v[i], 4);
        put_le<std::uint32_t>(f, u);
    }
    if (!f) throw FormatError("write failed: " + path);
}

LabeledDataset load_expanded(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kExpsMagic, 4) != 0) throw FormatError("bad dataset magic in " + path);
    const auto version = get_le<std::uint16_t>(f, "version");
    if (version != kExpsVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    LabeledDataset ds;
    ds.class_count = get_le<std::uint16_t>(f, "class count");
    const auto count = get_le<std::uint64_t>(f, "count");
    const int channels = get_le<std::uint16_t>(f, "channels");
    const int height = get_le<std::uint16_t>(f, "height");
    const int width = get_le<std::uint16_t>(f, "width");
    const auto dtype = get_le<std::uint8_t>(f, "dtype");
    if (dtype != 0) throw FormatError("unsupported pixel dtype tag " + std::to_string(dtype));
    ds.images = Tensor::zeros({static_cast<int>(count), channels, height, width});
    ds.labels.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) ds.labels[i] = get_le<std::uint16_t>(f, "label");
    for (Eigen::Index i = 0; i < ds.images.v.size(); ++i) {
        const std::uint32_t u = get_le<std::uint32_t>(f, "pixel");
        std::memcpy(&ds.images.v[i], &u, 4);
    }
    ds.role = LabeledDataset::Role::expanded;
    ds.validate();
    return ds;
}

} // namespace es
