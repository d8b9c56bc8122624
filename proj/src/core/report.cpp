#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "train.hpp"

namespace quiz {

namespace {

nlohmann::json stats(const std::vector<double>& v) {
  nlohmann::json j;
  if (v.empty()) return j;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= double(v.size());
  j["mean"] = mean;
  j["std"] = std::sqrt(var);
  return j;
}

std::string mean_std_text(const nlohmann::json& s) {
  if (!s.contains("mean")) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f(%.3f)", s["mean"].get<double>(),
                s["std"].get<double>());
  return buf;
}

}  // namespace

std::string EvalSummary::to_json() const {
  nlohmann::json root;
  nlohmann::json jp = nlohmann::json::array();
  std::vector<double> tres, rtres, offsets, times, baselines;
  for (const MetricsReport& r : pairs) {
    nlohmann::json p;
    p["id"] = r.id;
    p["tre_mm"] = r.tre_mm;
    p["rtre"] = r.rtre;
    p["seconds_per_pair"] = r.seconds_per_pair;
    p["tre_mm_baseline"] = r.tre_mm_baseline;
    if (r.offset_mm) {
      p["offset_mm"] = *r.offset_mm;
      p["offset_mm_axes"] = {r.offset_mm_axes->x, r.offset_mm_axes->y, r.offset_mm_axes->z};
      p["predicted_shift"] = {r.predicted_shift->x, r.predicted_shift->y,
                              r.predicted_shift->z};
      p["true_shift"] = {r.true_shift->x, r.true_shift->y, r.true_shift->z};
      offsets.push_back(*r.offset_mm);
    }
    tres.push_back(r.tre_mm);
    rtres.push_back(r.rtre);
    times.push_back(r.seconds_per_pair);
    baselines.push_back(r.tre_mm_baseline);
    jp.push_back(p);
  }
  root["pairs"] = jp;

  nlohmann::json agg;
  agg["n_pairs"] = pairs.size();
  agg["tre_mm"] = stats(tres);
  agg["rtre"] = stats(rtres);
  agg["tre_mm_baseline"] = stats(baselines);
  agg["seconds_per_pair"] = stats(times);
  if (!offsets.empty()) agg["offset_mm"] = stats(offsets);
  agg["improved_fraction"] = improved_fraction;
  agg["summary"] = "TRE(mm) " + mean_std_text(agg["tre_mm"]) +
                   (offsets.empty() ? std::string()
                                    : ", offset(mm) " + mean_std_text(agg["offset_mm"])) +
                   ", rTRE " + mean_std_text(agg["rtre"]);
  root["aggregate"] = agg;
  return root.dump(2);
}

}  // namespace quiz
