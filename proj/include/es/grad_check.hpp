#pragma once

#include <functional>

#include "es/param_store.hpp"

namespace es {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

/// Central-difference check of d(loss)/d(params). `f` rebuilds the forward
/// graph from scratch on every call and returns the scalar loss node.
///
/// Per sampled coordinate: rel = |analytic - fd| / max(|analytic|, |fd|, 1e-8).
/// Two guards keep the check meaningful in float32:
///  - resolution: coordinates are sampled where the analytic gradient clears
///    1000x the fd noise floor (eps_f32 * |loss| / (2 eps)); parameters with
///    ~zero gradient everywhere are probed at random coordinates instead and
///    agree only if the measured fd is below the floor too, so a missing
///    gradient still fails and a constant objective reports exactly zero;
///  - smoothness: fd is evaluated at eps and eps/2, and coordinates where the
///    two disagree (a ReLU kink inside the stencil) are skipped — finite
///    differences cannot certify those, while a wrong gradient at a smooth
///    coordinate still fails.
GradCheckResult grad_check(const std::function<Var(Tape&, BoundParams&)>& f, ParamStore& params, float eps,
                           int samples_per_param = 6, std::uint64_t seed = 0x9d5e);

} // namespace es
