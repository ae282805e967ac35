#include "ocpec/problem.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace ocpec {

namespace {

using nlohmann::json;

[[noreturn]] void fail(ErrorCode code, const std::string& field, const std::string& msg) {
  throw Error(code, "field '" + field + "': " + msg);
}

double number(const json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  fail(ErrorCode::Parse, field, "expected a number, \"inf\" or \"-inf\"");
}

const json& member(const json& obj, const std::string& field) {
  auto it = obj.find(field);
  if (it == obj.end()) fail(ErrorCode::Parse, field, "missing");
  return *it;
}

Vec vector(const json& v, const std::string& field) {
  if (!v.is_array()) fail(ErrorCode::Parse, field, "expected an array");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = number(v[i], field + "[" + std::to_string(i) + "]");
  }
  return out;
}

Mat matrix(const json& v, const std::string& field) {
  if (!v.is_array()) fail(ErrorCode::Parse, field, "expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  Eigen::Index cols = 0;
  if (rows > 0) {
    if (!v[0].is_array()) fail(ErrorCode::Parse, field, "expected an array of rows");
    cols = static_cast<Eigen::Index>(v[0].size());
  }
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      fail(ErrorCode::Parse, field, "ragged row " + std::to_string(i));
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      out(i, j) = number(row[static_cast<std::size_t>(j)], field);
    }
  }
  return out;
}

void expect_shape(const Mat& M, Eigen::Index r, Eigen::Index c, const std::string& field,
                  const char* dims) {
  if (M.rows() != r || M.cols() != c) {
    std::ostringstream os;
    os << "expected shape " << r << "x" << c << " (" << dims << "), got " << M.rows() << "x"
       << M.cols();
    fail(ErrorCode::DimensionMismatch, field, os.str());
  }
}

void expect_length(const Vec& v, Eigen::Index r, const std::string& field, const char* dim) {
  if (v.size() != r) {
    std::ostringstream os;
    os << "expected length " << r << " (" << dim << "), got " << v.size();
    fail(ErrorCode::DimensionMismatch, field, os.str());
  }
}

void read_horizon(const json& j, OcpecProblem& p) {
  if (j.contains("t0")) p.t0 = number(j["t0"], "t0");
  if (j.contains("t1")) p.t1 = number(j["t1"], "t1");
  if (!(p.t0 < p.t1)) fail(ErrorCode::InvalidArgument, "t1", "must exceed t0");
}

double read_radius(const json& j) {
  if (!j.contains("radius")) return kInf;
  const double r = number(j["radius"], "radius");
  if (!(r > 0.0)) fail(ErrorCode::InvalidArgument, "radius", "must be positive");
  return r;
}

OcpecProblem parse_linear(const json& j) {
  const Mat A = matrix(member(j, "A"), "A");
  if (A.rows() != A.cols()) fail(ErrorCode::DimensionMismatch, "A", "must be square");
  const Eigen::Index n = A.rows();
  const Vec q = vector(member(j, "q"), "q");
  const Eigen::Index m = j.contains("m") ? j["m"].get<Eigen::Index>() : q.size();
  if (j.contains("n") && j["n"].get<Eigen::Index>() != n) {
    fail(ErrorCode::DimensionMismatch, "A", "does not match declared n");
  }

  LinearLcsData d;
  d.A = A;
  d.B = matrix(member(j, "B"), "B");
  expect_shape(d.B, n, m, "B", "n x m");
  d.c = vector(member(j, "c"), "c");
  expect_length(d.c, n, "c", "n");
  d.C = matrix(member(j, "C"), "C");
  expect_shape(d.C, m, n, "C", "l x n");
  d.D = matrix(member(j, "D"), "D");
  expect_shape(d.D, m, m, "D", "l x m");
  d.q = q;
  expect_length(d.q, m, "q", "l");
  const char* target_key = j.contains("T") ? "T" : "target";
  d.target = j.contains(target_key) ? vector(j[target_key], target_key) : Vec::Zero(n);
  expect_length(d.target, n, target_key, "n");

  Endpoint endpoint;
  if (j.contains("x0")) {
    const Vec x0 = vector(j["x0"], "x0");
    expect_length(x0, n, "x0", "n");
    if (j.contains("x1")) {
      const Vec x1 = vector(j["x1"], "x1");
      expect_length(x1, n, "x1", "n");
      endpoint = Endpoint::fixed_both(x0, x1);
    } else {
      endpoint = Endpoint::fixed_initial(x0);
    }
  } else if (j.contains("E0")) {
    const json& box = j["E0"];
    if (!box.is_object()) fail(ErrorCode::Parse, "E0", "expected an object {lo, hi}");
    const Vec lo = vector(member(box, "lo"), "E0.lo");
    const Vec hi = vector(member(box, "hi"), "E0.hi");
    expect_length(lo, n, "E0.lo", "n");
    expect_length(hi, n, "E0.hi", "n");
    if (!(lo.array() <= hi.array()).all()) fail(ErrorCode::InvalidArgument, "E0", "lo > hi");
    endpoint = Endpoint::box_initial(lo, hi);
  } else {
    fail(ErrorCode::Parse, "x0", "one of 'x0' or 'E0' is required");
  }

  OcpecProblem probe;
  read_horizon(j, probe);
  OcpecProblem p = make_linear_lcs(d, probe.t0, probe.t1, endpoint, read_radius(j));
  if (j.contains("U")) {
    const json& box = j["U"];
    if (!box.is_object()) fail(ErrorCode::Parse, "U", "expected an object {lo, hi}");
    p.control_set.bounded = true;
    p.control_set.lo = vector(member(box, "lo"), "U.lo");
    p.control_set.hi = vector(member(box, "hi"), "U.hi");
    expect_length(p.control_set.lo, m, "U.lo", "m");
    expect_length(p.control_set.hi, m, "U.hi", "m");
    p.validate();
  }
  return p;
}

}  // namespace

OcpecProblem parse_problem(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::Parse, "problem file must hold a JSON object");
  const json& kind_v = member(j, "kind");
  if (!kind_v.is_string()) fail(ErrorCode::Parse, "kind", "expected a string");
  const auto kind = kind_v.get<std::string>();

  try {
    if (kind.rfind("builtin:", 0) == 0) {
      OcpecProblem p = builtin(kind.substr(8));
      read_horizon(j, p);
      if (j.contains("radius")) p.radius = read_radius(j);
      return p;
    }
    if (kind == "linear_lcs") return parse_linear(j);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed field: ") + e.what());
  }
  fail(ErrorCode::UnknownKind, "kind", "unknown kind '" + kind + "'");
}

OcpecProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open problem file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

}  // namespace ocpec
