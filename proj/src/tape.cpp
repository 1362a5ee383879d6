#include "acnet/tape.hpp"

#include "acnet/tensor.hpp"

namespace acnet {

namespace {
thread_local Tape* g_current = nullptr;
}

void Tape::record(std::function<void()> backward_fn) {
  if (consumed_) {
    throw TapeError("recording onto a consumed tape; clear() before a new forward pass");
  }
  nodes_.push_back(std::move(backward_fn));
}

void Tape::backward() {
  if (consumed_) {
    throw TapeError("backward called twice without a new forward pass");
  }
  consumed_ = true;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::clear() {
  nodes_.clear();
  consumed_ = false;
}

Tape* Tape::current() { return g_current; }

TapeScope::TapeScope(Tape& tape) : prev_(g_current) { g_current = &tape; }

TapeScope::~TapeScope() { g_current = prev_; }

}  // namespace acnet
