#include "simpletag/metrics.hpp"

#include <algorithm>
#include <sstream>

#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

std::size_t count_matches(const TripletSet& pred, const TripletSet& gold) {
  std::size_t tp = 0;
  for (const auto& p : pred)
    if (std::find(gold.begin(), gold.end(), p) != gold.end()) ++tp;
  return tp;
}

}  // namespace

PRF PRF::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PRF out;
  out.tp = tp;
  out.fp = fp;
  out.fn = fn;
  out.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  out.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double sum = out.precision + out.recall;
  out.f1 = sum > 0 ? 2 * out.precision * out.recall / sum : 0.0;
  return out;
}

ScoreReport score_report(const std::vector<TripletSet>& pred, const std::vector<TripletSet>& gold) {
  if (pred.size() != gold.size()) {
    throw DataError("prediction/gold sentence count mismatch: " + std::to_string(pred.size()) +
                    " vs " + std::to_string(gold.size()));
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  double macro = 0;
  std::size_t scored = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const std::size_t hit = count_matches(pred[s], gold[s]);
    tp += hit;
    fp += pred[s].size() - hit;
    fn += gold[s].size() - hit;
    // a sentence with nothing predicted and nothing to find says nothing either way
    if (pred[s].empty() && gold[s].empty()) continue;
    macro += PRF::from_counts(hit, pred[s].size() - hit, gold[s].size() - hit).f1;
    ++scored;
  }
  ScoreReport out;
  out.micro = PRF::from_counts(tp, fp, fn);
  out.sentences = pred.size();
  out.macro_f1 = scored ? macro / static_cast<double>(scored) : 0.0;
  return out;
}

PRF score(const std::vector<TripletSet>& pred, const std::vector<TripletSet>& gold) {
  return score_report(pred, gold).micro;
}

std::string format_report(const ScoreReport& report) {
  const auto& m = report.micro;
  std::ostringstream os;
  os << "sentences " << report.sentences << '\n'
     << "precision " << m.precision << " (tp=" << m.tp << " fp=" << m.fp << ")\n"
     << "recall    " << m.recall << " (tp=" << m.tp << " fn=" << m.fn << ")\n"
     << "f1        " << m.f1 << '\n'
     << "macro_f1  " << report.macro_f1 << '\n';
  return os.str();
}

std::string format_prf_line(const PRF& prf) {
  std::ostringstream os;
  os << "P=" << prf.precision << " R=" << prf.recall << " F1=" << prf.f1 << " tp=" << prf.tp
     << " fp=" << prf.fp << " fn=" << prf.fn;
  return os.str();
}

}  // namespace simpletag
