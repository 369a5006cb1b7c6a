#include "xferlab/param_store.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "xferlab/access_log.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace xferlab {

Tensor& ParamStore::add(const std::string& name, Tensor t, bool trainable) {
  if (index_.count(name)) throw ConfigError("parameter already registered: " + name);
  auto e = std::make_unique<Entry>();
  e->name = name;
  e->tensor = std::move(t);
  e->trainable = trainable;
  e->tensor.requires_grad = trainable;
  Entry* raw = e.get();
  order_.push_back(std::move(e));
  index_.emplace(name, raw);
  return raw->tensor;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return *it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return *it->second;
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
  Entry& e = entry(name);
  e.trainable = trainable;
  e.tensor.requires_grad = trainable;
}

std::vector<ParamStore::Entry*> ParamStore::entries() {
  std::vector<Entry*> out;
  out.reserve(order_.size());
  for (auto& e : order_) out.push_back(e.get());
  return out;
}

std::vector<const ParamStore::Entry*> ParamStore::entries() const {
  std::vector<const Entry*> out;
  out.reserve(order_.size());
  for (auto& e : order_) out.push_back(e.get());
  return out;
}

std::size_t ParamStore::total_params() const {
  std::size_t n = 0;
  for (auto& e : order_) n += e->tensor.numel();
  return n;
}

std::size_t ParamStore::trainable_params() const {
  std::size_t n = 0;
  for (auto& e : order_)
    if (e->trainable) n += e->tensor.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& e : order_) e->tensor.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (auto& e : order_) {
    Tensor t = e->tensor;
    t.grad.clear();
    out.add(e->name, std::move(t), e->trainable);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const nlohmann::json& extra) {
  nlohmann::json header = extra;
  header["format_version"] = 1;
  nlohmann::json params = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto* e : store.entries()) {
    params.push_back({{"name", e->name},
                      {"shape", e->tensor.shape},
                      {"trainable", e->trainable},
                      {"offset", offset}});
    offset += e->tensor.numel() * sizeof(double);
  }
  header["params"] = std::move(params);

  const std::string head = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  const std::uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto* e : store.entries())
    out.write(reinterpret_cast<const char*>(e->tensor.data.data()),
              static_cast<std::streamsize>(e->tensor.numel() * sizeof(double)));
  if (!out) throw DataError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  iolog::note_open(path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  if (!in) throw DataError("checkpoint truncated (header length): " + path.string());
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw DataError("checkpoint truncated (header): " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (header.value("format_version", 0) != 1)
    throw DataError("unsupported checkpoint format_version");

  const std::streampos payload_start = in.tellg();
  Checkpoint ck;
  ck.header = header;
  for (const auto& p : header.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const std::vector<int> shape = p.at("shape").get<std::vector<int>>();
    const bool trainable = p.at("trainable").get<bool>();
    const std::uint64_t offset = p.at("offset").get<std::uint64_t>();
    Tensor t(shape);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw DataError("checkpoint payload truncated at param: " + name);
    ck.store.add(name, std::move(t), trainable);
  }
  return ck;
}

void backward(Tape& tape, Tape::Id loss, ParamStore& store) {
  store.zero_grads();
  tape.backward(loss);
}

}  // namespace xferlab
