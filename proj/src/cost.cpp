#include "aimc/cost.hpp"

namespace aimc {

CostReport estimate_cost(int tile_execs, const TimingSpec& spec, int batch) {
    spec.validate();
    if (tile_execs < 1) throw ContractViolation("estimate_cost: no tile executions");
    if (batch < 1) throw ContractViolation("estimate_cost: batch must be >= 1");

    CostReport rep;
    rep.tile_execs = tile_execs;
    rep.runs = (tile_execs + 3) / 4;
    rep.batch = batch;
    rep.runtime_ms = rep.runs * spec.t_matmul_ms;
    rep.energy_mj = spec.power_w * rep.runtime_ms;

    // each run's configuration is written once per batch
    const double write_ms = rep.runs * spec.t_weight_write_ms;
    rep.batch_runtime_ms = batch * rep.runtime_ms + write_ms;
    rep.batch_energy_mj = spec.power_w * rep.batch_runtime_ms;

    rep.breakdown.push_back({"matmul runs (per image)", rep.runtime_ms, rep.energy_mj});
    rep.breakdown.push_back(
        {"weight write (once per batch)", write_ms, spec.power_w * write_ms});
    return rep;
}

CostReport estimate_cost(const CompiledModel& model, const TimingSpec& spec, int batch) {
    return estimate_cost(model.tile_execs, spec, batch);
}

} // namespace aimc
