#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "memf/tape.hpp"

namespace memf {

using NamedTensors = std::map<std::string, Tensor>;

struct GradCheckEntry {
    std::string param;
    std::size_t index;
    double autodiff;
    double finite_diff;
    double rel_error;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool passed = true;
    std::size_t checked = 0;
    std::optional<GradCheckEntry> worst;
};

/// A reusable forward definition over named inputs and a ParamStore. The
/// builder is rerun for every forward() call (the tape is rebuilt each time),
/// which is what makes the finite-difference gradient check a pure function
/// of parameters.
class ComputeGraph {
public:
    /// The builder returns the graph outputs by name. A graph used with
    /// backward()/check_gradients() must expose exactly one output.
    using Builder = std::function<std::map<std::string, Tape::Var>(
        Tape&, const std::map<std::string, Tape::Var>& inputs, ParamStore& params)>;

    ComputeGraph(Builder builder, ParamStore params,
                 std::map<std::string, std::vector<std::size_t>> input_shapes);

    /// Runs the builder; caches the tape for backward.
    NamedTensors forward(const NamedTensors& inputs);

    /// Gradients of the single output w.r.t. every trainable leaf, seeded
    /// with `output_grad`. Requires a prior forward() on this instance.
    NamedTensors backward(const Tensor& output_grad);

    /// Central finite differences (f(p+eps) - f(p-eps)) / 2 eps against the
    /// autodiff gradient for every parameter scalar. Report-only: never
    /// throws on mismatch. Output must be scalar.
    GradCheckReport check_gradients(const NamedTensors& inputs, double eps, double tolerance);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    struct Run {
        Tape tape;
        std::map<std::string, Tape::Var> outputs;
    };
    std::unique_ptr<Run> run_forward(const NamedTensors& inputs);

    Builder builder_;
    ParamStore params_;
    std::map<std::string, std::vector<std::size_t>> input_shapes_;
    std::unique_ptr<Run> last_;
};

/// Relative error with a floor, so near-zero gradient pairs compare on an
/// absolute scale instead of blowing up the ratio.
double grad_rel_error(double a, double b, double floor = 1e-3);

} // namespace memf
