#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>

#include "advedit/tree.hpp"

namespace advedit {

// A trained tree classifier with labels 1..num_classes(). Implementations are
// immutable after training, so predict may be called concurrently.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int predict(const Tree& t) const = 0;
  virtual int num_classes() const = 0;
  virtual std::string kind() const = 0;
};

// Adapts a plain function; used for scripted classifiers.
class FunctionClassifier final : public Classifier {
 public:
  FunctionClassifier(std::function<int(const Tree&)> fn, int classes, std::string name = "function")
      : fn_(std::move(fn)), classes_(classes), name_(std::move(name)) {}
  int predict(const Tree& t) const override { return fn_(t); }
  int num_classes() const override { return classes_; }
  std::string kind() const override { return name_; }

 private:
  std::function<int(const Tree&)> fn_;
  int classes_;
  std::string name_;
};

// Black-box view of a classifier: labels only, with a query counter.
class ClassifierHandle {
 public:
  explicit ClassifierHandle(const Classifier& model) : model_(&model) {}
  ClassifierHandle(const ClassifierHandle&) = delete;
  ClassifierHandle& operator=(const ClassifierHandle&) = delete;

  int predict(const Tree& t) {
    queries_.fetch_add(1, std::memory_order_relaxed);
    return model_->predict(t);
  }
  std::size_t query_count() const noexcept { return queries_.load(std::memory_order_relaxed); }
  int num_classes() const { return model_->num_classes(); }

 private:
  const Classifier* model_;
  std::atomic<std::size_t> queries_{0};
};

}  // namespace advedit
