#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "xferlab/tensor.hpp"

#include "json.hpp"

namespace xferlab {

// Named parameter registry with a frozen/trainable partition. Iteration is
// insertion-ordered and entry addresses are stable, so tape leaves can hold
// Tensor pointers across the life of a training run.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  Tensor& add(const std::string& name, Tensor t, bool trainable = true);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  Tensor& get(const std::string& name) { return entry(name).tensor; }
  const Tensor& get(const std::string& name) const { return entry(name).tensor; }

  void set_trainable(const std::string& name, bool trainable);

  std::vector<Entry*> entries();
  std::vector<const Entry*> entries() const;

  std::size_t size() const { return order_.size(); }
  std::size_t total_params() const;
  std::size_t trainable_params() const;
  void zero_grads();

  ParamStore clone() const;

 private:
  std::vector<std::unique_ptr<Entry>> order_;
  std::unordered_map<std::string, Entry*> index_;
};

// Checkpoint layout: u64 little-endian header length, UTF-8 JSON header,
// then the raw f64 payloads back to back. The header carries format_version,
// a params list of {name, shape, trainable, offset} (offset in bytes from the
// start of the payload section) and any extra metadata the caller passes.
// Round-trip is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
  ParamStore store;
  nlohmann::json header;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace xferlab
