#include "xferlab/kernels.hpp"

#include <cstdlib>

namespace xferlab::kern {

#if !defined(__x86_64__) && !defined(_M_X64)
const Backend* detail::avx2() { return nullptr; }
#endif

#if !defined(__aarch64__)
const Backend* detail::neon() { return nullptr; }
#endif

namespace {

const Backend* pick_default() {
  if (const char* env = std::getenv("XFERLAB_KERNELS")) {
    std::string want(env);
    if (want == "scalar") return &scalar();
    if (want == "avx2" && detail::avx2()) return detail::avx2();
    if (want == "neon" && detail::neon()) return detail::neon();
    // unknown/unsupported override falls through to auto-detection
  }
  if (const Backend* b = detail::avx2()) return b;
  if (const Backend* b = detail::neon()) return b;
  return &scalar();
}

const Backend*& active_slot() {
  static const Backend* slot = pick_default();
  return slot;
}

}  // namespace

const Backend& active() { return *active_slot(); }

std::vector<const Backend*> available() {
  std::vector<const Backend*> out{&scalar()};
  if (const Backend* b = detail::avx2()) out.push_back(b);
  if (const Backend* b = detail::neon()) out.push_back(b);
  return out;
}

bool force(const std::string& name) {
  for (const Backend* b : available()) {
    if (name == b->name) {
      active_slot() = b;
      return true;
    }
  }
  return false;
}

}  // namespace xferlab::kern
