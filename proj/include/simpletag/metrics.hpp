#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "simpletag/decoder.hpp"

namespace simpletag {

struct PRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  static PRF from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
};

struct ScoreReport {
  PRF micro;            // pooled counts; the headline number
  double macro_f1 = 0;  // mean per-sentence F1 over sentences with any gold or predicted triplet
  std::size_t sentences = 0;
};

// Exact match on aspect span, opinion span and polarity. Throws DataError
// when the lists are not aligned.
PRF score(const std::vector<TripletSet>& pred, const std::vector<TripletSet>& gold);
ScoreReport score_report(const std::vector<TripletSet>& pred, const std::vector<TripletSet>& gold);

// "precision 0.666667 (tp=2 fp=1)" style block, one metric per line.
std::string format_report(const ScoreReport& report);
// Single machine-readable line: "P=... R=... F1=... tp=.. fp=.. fn=.."
std::string format_prf_line(const PRF& prf);

}  // namespace simpletag
