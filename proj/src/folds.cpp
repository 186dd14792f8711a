#include "decan/folds.hpp"

#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace decan::eval {

std::string_view to_string(CvScheme scheme) { return scheme == CvScheme::LOBO ? "LOBO" : "LOSO"; }

CvScheme scheme_from_string(std::string_view name) {
  if (name == "LOBO" || name == "lobo") return CvScheme::LOBO;
  if (name == "LOSO" || name == "loso") return CvScheme::LOSO;
  throw std::invalid_argument("unknown cross-validation scheme: " + std::string(name));
}

FoldPlan make_folds(std::span<const GroupKey> keys, CvScheme scheme) {
  std::map<int, std::set<int>> blocks;
  for (const auto& k : keys) blocks[k.subject].insert(k.block);
  FoldPlan plan;
  plan.scheme = scheme;
  if (scheme == CvScheme::LOBO) {
    for (const auto& [subject, bs] : blocks) {
      if (bs.size() < 2) {
        throw std::invalid_argument("LOBO needs at least 2 blocks; subject " + std::to_string(subject) + " has " +
                                    std::to_string(bs.size()));
      }
      for (int held : bs) {
        Fold f;
        f.subject = subject;
        f.block = held;
        for (int b : bs) (b == held ? f.test : f.train).push_back({subject, b});
        plan.folds.push_back(std::move(f));
      }
    }
  } else {
    if (blocks.size() < 2) throw std::invalid_argument("LOSO needs at least 2 subjects");
    for (const auto& [held, unused] : blocks) {
      Fold f;
      f.subject = held;
      for (const auto& [subject, bs] : blocks) {
        for (int b : bs) (subject == held ? f.test : f.train).push_back({subject, b});
      }
      plan.folds.push_back(std::move(f));
    }
  }
  return plan;
}

}  // namespace decan::eval
