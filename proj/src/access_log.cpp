#include "xferlab/access_log.hpp"

#include <mutex>

namespace xferlab::iolog {

namespace {

std::mutex g_mutex;
std::vector<Record> g_records;

thread_local std::string t_phase = "unscoped";

}  // namespace

void note_open(const std::string& path) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_records.push_back({t_phase, path});
}

std::string current_phase() { return t_phase; }

PhaseScope::PhaseScope(std::string phase) : prev_(t_phase) { t_phase = std::move(phase); }
PhaseScope::~PhaseScope() { t_phase = prev_; }

std::vector<Record> snapshot() {
  std::lock_guard<std::mutex> lock(g_mutex);
  return g_records;
}

void clear() {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_records.clear();
}

}  // namespace xferlab::iolog
