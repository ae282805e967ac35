#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace ocpec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorCode {
  InvalidArgument = 1,
  Parse,
  DimensionMismatch,
  UnknownKind,
  Infeasible,
  LcpFailure,
  Solver,
  Io,
  Internal,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code; the C
// API maps it one-to-one onto ocpec_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Time grid plus state/control values at nodes t_0..t_N. Controls are stored
// at every node; the transcription only treats u_0..u_{N-1} as decisions and
// completes u_N afterwards.
struct DiscreteTrajectory {
  Vec t;
  Mat x;  // n x (N+1)
  Mat u;  // m x (N+1)

  int intervals() const { return static_cast<int>(t.size()) - 1; }
  int nodes() const { return static_cast<int>(t.size()); }
  double step() const { return (t(t.size() - 1) - t(0)) / intervals(); }
};

}  // namespace ocpec
