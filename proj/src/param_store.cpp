#include "es/param_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace es {

namespace {

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void put_le(std::ostream& os, T x) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(x) >> (8 * i)) & 0xff);
    put_bytes(os, buf, sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw FormatError("checkpoint truncated");
    std::uint64_t x = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) x |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(x);
}

void put_f32(std::ostream& os, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_le<std::uint32_t>(os, u);
}

float get_f32(std::istream& is) {
    const std::uint32_t u = get_le<std::uint32_t>(is);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

constexpr char kMagic[4] = {'E', 'S', 'P', 'K'};
constexpr std::uint16_t kVersion = 1;

} // namespace

void ParamStore::add(const std::string& name, Tensor value) {
    if (name.empty()) throw ParamError("parameter name must be non-empty");
    if (index_.count(name)) throw ParamError("duplicate parameter name: " + name);
    Entry e;
    e.m = Tensor::zeros(value.shape);
    e.v = Tensor::zeros(value.shape);
    e.value = std::move(value);
    index_.emplace(name, std::move(e));
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParamError("unknown parameter: " + name);
    return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParamError("unknown parameter: " + name);
    return it->second;
}

Tensor& ParamStore::at(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::at(const std::string& name) const { return entry(name).value; }

void ParamStore::set_trainable(const std::string& name, bool on) { entry(name).trainable = on; }

int ParamStore::set_trainable_prefix(const std::string& prefix, bool on) {
    int count = 0;
    for (auto& [name, e] : index_)
        if (name.rfind(prefix, 0) == 0) {
            e.trainable = on;
            ++count;
        }
    return count;
}

bool ParamStore::trainable(const std::string& name) const { return entry(name).trainable; }

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(index_.size());
    for (const auto& [name, e] : index_) out.push_back(name);
    return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, e] : index_)
        if (e.trainable) out.push_back(name);
    return out;
}

void adam_step(ParamStore& store, const std::unordered_map<std::string, Tensor>& grads, const AdamOpts& opts) {
    for (const auto& [name, g] : grads) {
        if (!store.has(name)) throw ParamError("adam_step: gradient for unknown parameter " + name);
        if (!store.trainable(name))
            throw ContractError("adam_step: gradient supplied for frozen parameter " + name);
        if (g.shape != store.at(name).shape)
            throw ShapeError("adam_step: gradient shape " + shape_str(g.shape) + " vs parameter " + shape_str(store.at(name).shape) + " for " + name);
    }
    store.step_ += 1;
    const float t = static_cast<float>(store.step_);
    const float bc1 = 1.0f - std::pow(opts.beta1, t);
    const float bc2 = 1.0f - std::pow(opts.beta2, t);
    // std::map iteration is ascending by name: the fixed update order.
    for (auto& [name, e] : store.index_) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        const Eigen::ArrayXf& g = it->second.v;
        e.m.v = opts.beta1 * e.m.v + (1.0f - opts.beta1) * g;
        e.v.v = opts.beta2 * e.v.v + (1.0f - opts.beta2) * g * g;
        e.value.v -= opts.lr * (e.m.v / bc1) / ((e.v.v / bc2).sqrt() + opts.eps);
    }
}

void ParamStore::save(std::ostream& os) const {
    put_bytes(os, kMagic, 4);
    put_le<std::uint16_t>(os, kVersion);
    put_le<std::uint64_t>(os, index_.size());
    for (const auto& [name, e] : index_) {
        if (name.size() > 0xffff) throw ParamError("parameter name too long: " + name);
        put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        put_bytes(os, name.data(), name.size());
        put_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.value.shape.size()));
        for (int ext : e.value.shape) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ext));
        for (Eigen::Index i = 0; i < e.value.v.size(); ++i) put_f32(os, e.value.v[i]);
    }
}

void ParamStore::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
    save(f);
    if (!f) throw FormatError("checkpoint write failed: " + path);
}

ParamStore ParamStore::load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic");
    const auto version = get_le<std::uint16_t>(is);
    if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = get_le<std::uint64_t>(is);
    ParamStore store;
    for (std::uint64_t p = 0; p < count; ++p) {
        const auto name_len = get_le<std::uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw FormatError("checkpoint truncated in name");
        const auto rank = get_le<std::uint8_t>(is);
        Shape shape(rank);
        for (auto& ext : shape) ext = static_cast<int>(get_le<std::uint32_t>(is));
        Tensor t = Tensor::zeros(shape);
        for (Eigen::Index i = 0; i < t.v.size(); ++i) t.v[i] = get_f32(is);
        store.add(name, std::move(t));
    }
    return store;
}

ParamStore ParamStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    return load(f);
}

std::string ParamStore::serialize() const {
    std::ostringstream os(std::ios::binary);
    save(os);
    return os.str();
}

ParamStore ParamStore::load_from_string(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return load(is);
}

Var BoundParams::operator[](const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const bool rq = with_grads_ && store_->trainable(name);
    Var v = tape_->leaf(store_->at(name), rq);
    bound_.emplace(name, v);
    return v;
}

std::unordered_map<std::string, Tensor> BoundParams::grads() const {
    std::unordered_map<std::string, Tensor> out;
    for (const auto& [name, var] : bound_)
        if (tape_->requires_grad(var)) out.emplace(name, tape_->grad(var));
    return out;
}

} // namespace es
