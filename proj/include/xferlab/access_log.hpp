#pragma once

#include <string>
#include <vector>

namespace xferlab::iolog {

// Process-wide instrumented file-access log. Dataset and checkpoint reads go
// through note_open(), tagged with the current thread's phase, so the harness
// can prove that adaptation never touched an original-domain file.
struct Record {
  std::string phase;
  std::string path;
};

void note_open(const std::string& path);
std::string current_phase();

class PhaseScope {
 public:
  explicit PhaseScope(std::string phase);
  ~PhaseScope();
  PhaseScope(const PhaseScope&) = delete;
  PhaseScope& operator=(const PhaseScope&) = delete;

 private:
  std::string prev_;
};

std::vector<Record> snapshot();
void clear();

}  // namespace xferlab::iolog
