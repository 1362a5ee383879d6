#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace acnet {

// Records the backward closure of every primitive applied while a TapeScope
// is active on the current thread. Closures hold shared handles to their
// inputs, outputs and saved intermediates; replaying them in reverse
// recording order visits the graph in reverse topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn);

  // Runs all recorded closures in reverse. Callers seed output gradients
  // beforehand. A second call without clear() is an error.
  void backward();
  void clear();

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Tape recording ops on the current thread, or nullptr.
  static Tape* current();

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;

  friend class TapeScope;
};

// RAII activation of a tape on the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

}  // namespace acnet
