#pragma once

#include <atomic>
#include <cstdio>
#include <string>
#include <vector>

#include "acrodis/corpus.h"
#include "acrodis/inference.h"

namespace acrodis::testing {

/// `n` single-acronym instances with ids <prefix>001.. cycling through a few
/// clinical acronyms.
inline corpus::Corpus synthetic_corpus(int n, const char* prefix = "s",
                                       corpus::ModeLabel mode = corpus::ModeLabel::single_pass) {
  static const std::pair<const char*, const char*> senses[] = {
      {"MS", "multiple sclerosis"},   {"PT", "prothrombin time"}, {"ED", "emergency department"},
      {"CT", "computed tomography"}, {"RA", "rheumatoid arthritis"}};
  std::vector<corpus::Instance> v;
  char id[16];
  for (int i = 1; i <= n; ++i) {
    std::snprintf(id, sizeof id, "%s%03d", prefix, i);
    const auto& [acr, exp] = senses[(i - 1) % 5];
    v.push_back({id, "Note " + std::to_string(i) + " mentions " + acr + " today.", acr, exp,
                 corpus::Domain::biomedical});
  }
  return corpus::Corpus::make(std::move(v), mode);
}

/// Mock behaviour answering every instance with its gold expansion.
inline inference::MockBehavior oracle_behavior(const corpus::Corpus& c) {
  inference::MockBehavior b;
  for (const auto& inst : c.instances()) {
    b.instance_answers[inst.id] = {inst.acronym, inst.expansion};
    b.population.push_back(inst.id);
  }
  return b;
}

/// Wraps a backend and counts complete() calls.
class CountingBackend : public inference::Backend {
 public:
  explicit CountingBackend(inference::Backend& inner) : inner_(inner) {}
  inference::CompletionRecord complete(const inference::CompletionRequest& r) override {
    ++calls_;
    return inner_.complete(r);
  }
  inference::HealthReport probe() override { return inner_.probe(); }
  std::string id() const override { return inner_.id(); }
  std::size_t parallelism() const override { return inner_.parallelism(); }
  int calls() const { return calls_.load(); }

 private:
  inference::Backend& inner_;
  std::atomic<int> calls_{0};
};

}  // namespace acrodis::testing
