#include <algorithm>
#include <map>
#include <sstream>

#include "astws/metrics.hpp"
#include "json.hpp"

namespace astws {
namespace {

struct Column {
  const char* name;
  std::optional<double> EvalReport::*field;
};

constexpr Column kColumns[] = {
    {"erle_db", &EvalReport::erle_db},   {"sdr_db", &EvalReport::sdr_db},
    {"sisnr_db", &EvalReport::sisnr_db}, {"s_sisnr", &EvalReport::s_sisnr},
    {"mag_loss", &EvalReport::mag_loss}, {"ri_loss", &EvalReport::ri_loss},
    {"total_loss", &EvalReport::total_loss},
};

std::string condition_key(const EvalReport& r) {
  if (r.condition == "DT" && r.ser_db) return "DT_SER" + std::to_string(*r.ser_db);
  return r.condition;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os.precision(10);
  os << "id,condition,ser_db";
  for (const auto& c : kColumns) os << ',' << c.name;
  os << '\n';
  for (const auto& r : reports) {
    os << r.id << ',' << r.condition << ',';
    if (r.ser_db) os << *r.ser_db;
    for (const auto& c : kColumns) {
      os << ',';
      if (const auto& v = r.*(c.field)) os << *v;
    }
    os << '\n';
  }
  return os.str();
}

std::string reports_to_json(const std::vector<EvalReport>& reports) {
  std::map<std::string, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) groups[condition_key(r)].push_back(&r);
  nlohmann::ordered_json root = nlohmann::ordered_json::object();
  root["count"] = reports.size();
  nlohmann::ordered_json conditions = nlohmann::ordered_json::object();
  for (const auto& [key, rows] : groups) {
    nlohmann::ordered_json g;
    g["count"] = rows.size();
    for (const auto& c : kColumns) {
      std::vector<double> values;
      for (const EvalReport* r : rows) {
        if (const auto& v = r->*(c.field)) values.push_back(*v);
      }
      if (values.empty()) continue;
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      g[c.name] = {{"mean", mean}, {"median", median(values)}, {"n", values.size()}};
    }
    conditions[key] = std::move(g);
  }
  root["conditions"] = std::move(conditions);
  return root.dump(2);
}

}  // namespace astws
