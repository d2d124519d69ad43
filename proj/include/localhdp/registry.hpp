#pragma once

// Open-ended category store. Each label owns an independent CategoryModel
// plus every document it was taught or corrected with.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "localhdp/corpus.hpp"
#include "localhdp/hdp.hpp"

namespace localhdp {

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of a category's model: a hash of the registry seed and the label,
/// so a label's parameters never depend on which other labels exist.
inline std::uint64_t category_seed(std::uint64_t registry_seed, const CategoryLabel& label) {
  const auto& s = label.str();
  return mix64(registry_seed ^ io::fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}));
}

struct Classification {
  CategoryLabel label;
  std::map<CategoryLabel, double> scores;
};

class Registry {
 public:
  struct Category {
    hdp::CategoryModel model;
    std::vector<BowDocument> instances;
    bool operator==(const Category& o) const { return model == o.model && instances == o.instances; }
  };

  Registry(std::size_t dictionary_size, hdp::Hyperparams hyper, std::uint64_t seed,
           hdp::InferenceOptions inference = {})
      : dictionary_size_(dictionary_size), hyper_(hyper), seed_(seed), inference_(inference) {
    hyper_.validate();
    if (dictionary_size_ < 1) throw ParameterError("dictionary size must be >= 1");
  }

  /// Adds `doc` to `label`, creating the category on first use. The new
  /// instance is fit incrementally; on error the registry is unchanged.
  void teach(const CategoryLabel& label, const BowDocument& doc) {
    if (doc.empty()) throw InferenceError("cannot teach an empty document");
    if (doc.id_bound() > dictionary_size_)
      throw ValidationError("word id " + std::to_string(doc.entries().back().id) + " ≥ V=" +
                            std::to_string(dictionary_size_));
    auto it = categories_.find(label);
    const hdp::CategoryModel base =
        it != categories_.end() ? it->second.category.model : hdp::init_model(hyper_, dictionary_size_, category_seed(seed_, label));
    auto fitted = hdp::fit_document(base, doc, inference_);
    auto expectations = hdp::compute_expectations(fitted.model);
    if (it == categories_.end()) it = categories_.emplace(label, Entry{}).first;
    it->second.category.model = std::move(fitted.model);
    it->second.category.instances.push_back(doc);
    it->second.expectations = std::move(expectations);
  }

  /// Corrective feedback: the true label's model learns from the misclassified view.
  void correct(const CategoryLabel& label, const BowDocument& doc) { teach(label, doc); }

  /// Scores `doc` under every category; the winner is the highest score with
  /// ties going to the lexicographically smallest label.
  Classification ask(const BowDocument& doc) const {
    if (categories_.empty()) throw Error("no categories taught");
    if (doc.empty()) throw InferenceError("cannot classify an empty document");
    Classification c;
    double best = 0.0;
    bool first = true;
    for (const auto& [label, entry] : categories_) {
      const double s = hdp::log_likelihood(entry.category.model, entry.expectations, doc, inference_);
      c.scores.emplace(label, s);
      if (first || s > best) {
        best = s;
        c.label = label;
        first = false;
      }
    }
    return c;
  }

  /// Installs a category wholesale (snapshot loading).
  void restore(const CategoryLabel& label, Category category) {
    if (category.model.vocabulary_size() != dictionary_size_ || !(category.model.hyper == hyper_))
      throw ValidationError("category '" + label.str() + "' does not match the registry's V or hyperparameters");
    if (category.model.doc_count != category.instances.size())
      throw ValidationError("category '" + label.str() + "' doc_count differs from its stored instances");
    auto e = hdp::compute_expectations(category.model);
    categories_[label] = Entry{std::move(category), std::move(e)};
  }

  bool contains(const CategoryLabel& label) const { return categories_.count(label) != 0; }
  const Category& category(const CategoryLabel& label) const {
    auto it = categories_.find(label);
    if (it == categories_.end()) throw Error("unknown category '" + label.str() + "'");
    return it->second.category;
  }

  std::vector<CategoryLabel> labels() const {
    std::vector<CategoryLabel> out;
    for (const auto& [label, _] : categories_) out.push_back(label);
    return out;
  }

  std::size_t size() const noexcept { return categories_.size(); }
  bool empty() const noexcept { return categories_.empty(); }
  std::size_t dictionary_size() const noexcept { return dictionary_size_; }
  const hdp::Hyperparams& hyper() const noexcept { return hyper_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const hdp::InferenceOptions& inference() const noexcept { return inference_; }

  /// Mean stored instances per category (0 when empty).
  double average_instances() const {
    if (categories_.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& [_, e] : categories_) n += e.category.instances.size();
    return static_cast<double>(n) / static_cast<double>(categories_.size());
  }

  bool operator==(const Registry& o) const {
    if (dictionary_size_ != o.dictionary_size_ || !(hyper_ == o.hyper_) || seed_ != o.seed_ ||
        categories_.size() != o.categories_.size())
      return false;
    for (auto a = categories_.begin(), b = o.categories_.begin(); a != categories_.end(); ++a, ++b)
      if (a->first != b->first || !(a->second.category == b->second.category)) return false;
    return true;
  }

 private:
  struct Entry {
    Category category;
    hdp::ModelExpectations expectations;
  };

  std::size_t dictionary_size_;
  hdp::Hyperparams hyper_;
  std::uint64_t seed_;
  hdp::InferenceOptions inference_;
  std::map<CategoryLabel, Entry> categories_;
};

}  // namespace localhdp
