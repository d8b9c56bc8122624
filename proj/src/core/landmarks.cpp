#include "landmarks.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace quiz {

void LandmarkSet::validate() const {
  if (names.size() != points.size())
    throw_invalid("landmark name/point count mismatch");
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw_invalid("empty landmark name");
    if (!seen.insert(n).second) throw_invalid("duplicate landmark name: " + n);
  }
  for (const auto& p : points)
    if (!p.finite()) throw_invalid("non-finite landmark coordinate");
}

void LandmarkSet::validate_bounds(const Volume& vol) const {
  validate();
  for (size_t i = 0; i < points.size(); ++i)
    if (!vol.in_bounds(points[i]))
      throw_invalid("landmark out of bounds: " + names[i]);
}

bool paired(const LandmarkSet& a, const LandmarkSet& b) {
  return a.names == b.names && a.points.size() == b.points.size();
}

LandmarkSet load_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open landmark file: " + path);

  LandmarkSet set;
  std::string line;
  if (!std::getline(in, line)) throw_format("empty landmark file: " + path);
  if (line.rfind("name", 0) != 0)
    throw_format("landmark file missing `name,x,y,z` header: " + path);

  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4)
      throw_format("malformed landmark row at " + path + ":" + std::to_string(lineno));

    Vec3 p;
    for (int a = 0; a < 3; ++a) {
      try {
        size_t used = 0;
        p[a] = std::stod(fields[a + 1], &used);
        while (used < fields[a + 1].size() && std::isspace((unsigned char)fields[a + 1][used]))
          ++used;
        if (used != fields[a + 1].size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw_format("malformed landmark coordinate at " + path + ":" +
                     std::to_string(lineno));
      }
    }
    set.names.push_back(fields[0]);
    set.points.push_back(p);
  }
  set.validate();
  return set;
}

void save_landmarks(const LandmarkSet& set, const std::string& path) {
  set.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw_io("cannot open for writing: " + path);
  out << "name,x,y,z\n";
  char buf[160];
  for (size_t i = 0; i < set.points.size(); ++i) {
    const Vec3& p = set.points[i];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g", p.x, p.y, p.z);
    out << set.names[i] << ',' << buf << '\n';
  }
  out.close();
  if (!out) throw_io("write failed: " + path);
}

}  // namespace quiz
