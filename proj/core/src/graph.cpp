#include "memf/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace memf {

double grad_rel_error(double a, double b, double floor) {
    const double denom = std::max({std::fabs(a), std::fabs(b), floor});
    return std::fabs(a - b) / denom;
}

ComputeGraph::ComputeGraph(Builder builder, ParamStore params,
                           std::map<std::string, std::vector<std::size_t>> input_shapes)
    : builder_(std::move(builder)), params_(std::move(params)),
      input_shapes_(std::move(input_shapes)) {}

std::unique_ptr<ComputeGraph::Run> ComputeGraph::run_forward(const NamedTensors& inputs) {
    for (const auto& [name, shape] : input_shapes_) {
        auto it = inputs.find(name);
        if (it == inputs.end())
            throw std::invalid_argument("forward: missing input '" + name + "'");
        if (it->second.shape() != shape)
            throw std::invalid_argument("forward: input '" + name + "' has shape " +
                                        it->second.shape_str() + ", graph declares " +
                                        Tensor::zeros(shape).shape_str());
    }
    auto run = std::make_unique<Run>();
    std::map<std::string, Tape::Var> in_vars;
    for (const auto& [name, t] : inputs) in_vars[name] = run->tape.leaf(t, false);
    run->outputs = builder_(run->tape, in_vars, params_);
    if (run->outputs.empty()) throw std::logic_error("forward: builder produced no outputs");
    return run;
}

NamedTensors ComputeGraph::forward(const NamedTensors& inputs) {
    last_ = run_forward(inputs);
    NamedTensors out;
    for (const auto& [name, var] : last_->outputs) out[name] = last_->tape.value(var);
    return out;
}

NamedTensors ComputeGraph::backward(const Tensor& output_grad) {
    if (!last_) throw std::logic_error("backward: forward has not been run on this graph");
    if (last_->outputs.size() != 1)
        throw std::logic_error("backward: graph must have exactly one output");
    last_->tape.backward(last_->outputs.begin()->second, output_grad);
    GradStore grads;
    last_->tape.collect_param_grads(grads);
    NamedTensors out;
    for (const auto& [name, t] : params_.items()) {
        const Tensor* g = grads.find(name);
        out[name] = g ? *g : Tensor::zeros(t.shape());
    }
    return out;
}

GradCheckReport ComputeGraph::check_gradients(const NamedTensors& inputs, double eps,
                                              double tolerance) {
    if (eps <= 0.0) throw std::invalid_argument("check_gradients: eps must be positive");
    auto run = run_forward(inputs);
    if (run->outputs.size() != 1 || run->tape.value(run->outputs.begin()->second).numel() != 1)
        throw std::logic_error("check_gradients: graph must have one scalar output");
    run->tape.backward(run->outputs.begin()->second);
    GradStore grads;
    run->tape.collect_param_grads(grads);

    auto eval = [&]() {
        auto r = run_forward(inputs);
        return r->tape.value(r->outputs.begin()->second)[0];
    };

    GradCheckReport report;
    for (auto& [name, p] : params_.items()) {
        const Tensor* g = grads.find(name);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double saved = p[i];
            p[i] = saved + eps;
            const double fp = eval();
            p[i] = saved - eps;
            const double fm = eval();
            p[i] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double ad = g ? (*g)[i] : 0.0;
            const double rel = grad_rel_error(ad, fd);
            ++report.checked;
            if (rel >= report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = GradCheckEntry{name, i, ad, fd, rel};
            }
        }
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

} // namespace memf
