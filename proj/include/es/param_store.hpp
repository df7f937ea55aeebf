#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "es/autodiff.hpp"
#include "es/tensor.hpp"

namespace es {

struct AdamOpts {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Named parameter tensors plus per-parameter optimizer state. Names are
/// unique and shapes are fixed after add(); updates walk entries in ascending
/// name order so runs replay deterministically.
class ParamStore {
  public:
    void add(const std::string& name, Tensor value);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    void set_trainable(const std::string& name, bool on);
    /// Freeze/unfreeze all names starting with `prefix`; returns match count.
    int set_trainable_prefix(const std::string& prefix, bool on);
    bool trainable(const std::string& name) const;

    /// Names in ascending order.
    std::vector<std::string> names() const;
    std::vector<std::string> trainable_names() const;

    std::uint64_t step_count() const { return step_; }

    void save(const std::string& path) const;
    void save(std::ostream& os) const;
    static ParamStore load(const std::string& path);
    static ParamStore load(std::istream& is);
    static ParamStore load_from_string(const std::string& bytes);
    std::string serialize() const;

  private:
    struct Entry {
        Tensor value;
        Tensor m, v;
        bool trainable = true;
    };
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    std::map<std::string, Entry> index_;
    std::uint64_t step_ = 0;

    friend void adam_step(ParamStore&, const std::unordered_map<std::string, Tensor>&, const AdamOpts&);
};

/// One Adam update over all grads. Unknown names are errors; frozen names are
/// contract violations. Application order is ascending parameter name.
void adam_step(ParamStore& store, const std::unordered_map<std::string, Tensor>& grads, const AdamOpts& opts);

/// Binds store parameters into a tape on first use and remembers the handles,
/// so a forward pass can be re-run for training (trainable leaves carry
/// gradients) or pure evaluation.
class BoundParams {
  public:
    BoundParams(Tape& tape, ParamStore& store, bool with_grads = true)
        : tape_(&tape), store_(&store), with_grads_(with_grads) {}

    Var operator[](const std::string& name);

    /// Gradients of every bound trainable parameter after tape.backward().
    std::unordered_map<std::string, Tensor> grads() const;

    ParamStore& store() { return *store_; }

  private:
    Tape* tape_;
    ParamStore* store_;
    bool with_grads_;
    std::map<std::string, Var> bound_;
};

} // namespace es
