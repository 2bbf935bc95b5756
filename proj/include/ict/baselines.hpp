#pragma once

#include <string>

#include "ict/engine.hpp"

namespace ict {

enum class EnsembleMode { mean, min };

/// Input gradient of the lowest-predicting proxy at x; ties go to the
/// smallest index.
Vector ensemble_min_input_grad(const EnsembleState& state, const Vector& x);

/// Plain gradient ascent on one proxy trained with the first ensemble seed.
MethodResult run_grad(const OracleTask& task, const OfflineDataset& dataset, const IctConfig& cfg);

/// Gradient ascent on the mean or the pointwise minimum of three proxies.
MethodResult run_ensemble(const OracleTask& task, const OfflineDataset& dataset, const IctConfig& cfg,
                          EnsembleMode mode);

/// Ascent loop shared by the baselines, from an already trained ensemble.
MethodResult run_ensemble_from(const OracleTask& task, const PreparedRun& prep,
                               const EnsembleState& ensemble, const IctConfig& cfg, EnsembleMode mode);

MethodResult run_grad_from(const OracleTask& task, const PreparedRun& prep, const ProxyParams& proxy,
                           const IctConfig& cfg);

}  // namespace ict
