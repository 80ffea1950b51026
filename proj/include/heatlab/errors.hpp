#pragma once

#include <stdexcept>
#include <string>

namespace heatlab {

enum class errc {
  invalid_lattice,
  unsupported_kind,
  ball_exceeds_domain,
  insufficient_samples,
  nonmonotone_curve,
  cfl_violation,
  scheme_unsupported,
  kernel_unresolved,
  unsupported_model,
  fit_failure,
  profile_unfitted,
  negative_data,
  barrier_blowup,
  nonmonotone_iterates,
  tau_not_snapshot,
  fit_degenerate,
  not_critical_exponent,
  config_error,
  validation_error,
  io_error,
  unknown_format,
  internal_invariant,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::invalid_lattice: return "invalid-lattice";
    case errc::unsupported_kind: return "unsupported-kind";
    case errc::ball_exceeds_domain: return "ball-exceeds-domain";
    case errc::insufficient_samples: return "insufficient-samples";
    case errc::nonmonotone_curve: return "non-monotone-curve";
    case errc::cfl_violation: return "cfl-violation";
    case errc::scheme_unsupported: return "scheme-unsupported-for-model";
    case errc::kernel_unresolved: return "t-too-small-for-grid";
    case errc::unsupported_model: return "unsupported-model";
    case errc::fit_failure: return "fit-failure";
    case errc::profile_unfitted: return "profile-unfitted";
    case errc::negative_data: return "negative-data";
    case errc::barrier_blowup: return "barrier-blowup";
    case errc::nonmonotone_iterates: return "nonmonotone-iterates";
    case errc::tau_not_snapshot: return "tau-not-a-snapshot";
    case errc::fit_degenerate: return "fit-degenerate";
    case errc::not_critical_exponent: return "not-critical-exponent";
    case errc::config_error: return "config-error";
    case errc::validation_error: return "validation-error";
    case errc::io_error: return "io-error";
    case errc::unknown_format: return "unknown-format";
    case errc::internal_invariant: return "internal-invariant-violation";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

inline void require(bool ok, errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace heatlab
