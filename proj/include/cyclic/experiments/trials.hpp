#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace cyclic {

template <class T>
struct TrialOutcome {
  int index = 0;
  std::optional<T> value;
  /// Empty on success.
  std::string error;

  bool ok() const { return value.has_value(); }
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(0..count-1) on a small worker pool. Outcomes are stored by index,
/// so the result never depends on scheduling. An exception fails only its trial.
template <class T>
std::vector<TrialOutcome<T>> run_trials(int count, int threads, const std::function<T(int)>& body) {
  std::vector<TrialOutcome<T>> out(static_cast<std::size_t>(std::max(count, 0)));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      auto& slot = out[static_cast<std::size_t>(i)];
      slot.index = i;
      try {
        slot.value = body(i);
      } catch (const std::exception& e) {
        slot.error = e.what();
      } catch (...) {
        slot.error = "unknown error";
      }
    }
  };
  const int n = std::min(resolve_threads(threads), std::max(count, 1));
  if (n <= 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace cyclic
