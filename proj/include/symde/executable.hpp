#pragma once

// Lowered evaluation programs.
//
// An ExecutableSystem is a flat instruction stream plus a chunk table. The
// same instruction encoding serves two backends:
//
//  * bytecode: instructions run front to back; every instruction writes a
//    fresh register (single assignment) and `store` copies a register to an
//    output slot. Structurally equal subexpressions inside a chunk share one
//    register.
//  * treewalk: instructions are tree nodes whose operands are node indices.
//    Only `store` and `set_helper` roots are visited by the sequential scan;
//    everything else is reached by recursive descent, so shared
//    subexpressions are recomputed at every occurrence. This is the slow
//    reference interpreter.
//
// Helpers are computed once per evaluation in a leading `helpers` section.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "symde/errors.hpp"
#include "symde/expression.hpp"

namespace symde {

enum class Op : std::uint8_t {
    constant,   // r[dst] = value
    time,       // r[dst] = t
    state,      // r[dst] = y[a]
    param,      // r[dst] = params[a]
    past,       // r[dst] = past(index a, time r[b], site c)
    helper,     // treewalk only: value of helper slot a
    add,        // r[dst] = r[a] + r[b]
    sub,        // r[dst] = r[a] - r[b]
    mul,        // r[dst] = r[a] * r[b]
    div,        // r[dst] = r[a] / r[b]
    neg,        // r[dst] = -r[a]
    square,     // r[dst] = r[a] * r[a]
    pow,        // r[dst] = pow(r[a], r[b])
    call,       // r[dst] = fn(r[a])
    store,      // out[a] = r[b]
    set_helper, // treewalk only: helper slot a = node b
    // Fused forms produced by the bytecode peephole pass.
    call_sub,     // r[dst] = fn(r[a] - r[b])
    add_call,     // r[dst] = r[c] + fn(r[a])
    add_call_sub, // r[dst] = r[c] + fn(r[a] - r[b])
    madd,         // r[dst] = r[c] + r[a] * r[b]
    msub,         // r[dst] = r[c] - r[a] * r[b]
};

inline constexpr Op last_op = Op::msub;

struct Instruction {
    Op op = Op::constant;
    Fn fn = Fn::sin;
    std::uint32_t dst = 0;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::uint32_t c = 0;
    double value = 0.0;
};

enum class Backend : std::uint8_t { bytecode, treewalk };

inline std::string backend_name(Backend b) { return b == Backend::bytecode ? "bytecode" : "treewalk"; }

enum class Section : std::uint8_t { helpers, drift, diffusion };

/// A contiguous range of outputs lowered together, and the code computing them.
struct Chunk {
    Section section = Section::drift;
    std::uint32_t out_begin = 0;
    std::uint32_t out_end = 0;
    std::uint32_t code_begin = 0;
    std::uint32_t code_end = 0;
};

struct ExecutableSystem {
    static constexpr std::uint32_t format_version = 1;

    std::uint32_t version = format_version;
    std::size_t dimension = 0;
    Backend backend = Backend::bytecode;
    bool uses_past = false;
    bool has_diffusion = false;
    /// Bytecode: number of registers. Treewalk: number of helper slots.
    std::size_t registers = 0;
    /// Number of distinct delayed-access sites (distinct time arguments).
    std::size_t sites = 0;
    std::vector<Instruction> code;
    std::vector<Chunk> chunks;
    /// Runtime parameter slots, in binding order.
    std::vector<std::string> parameters;

    std::size_t chunk_count(Section s) const {
        std::size_t k = 0;
        for (const auto& c : chunks) k += c.section == s;
        return k;
    }

    std::size_t parameter_slot(const std::string& name) const {
        for (std::size_t i = 0; i < parameters.size(); ++i) {
            if (parameters[i] == name) return i;
        }
        throw UsageError("no parameter slot named '" + name + "'");
    }
};

struct PastSample {
    double value = 0.0;
    double derivative = 0.0;
};

/// Supplies past states during evaluation of delay equations. `site`
/// identifies the access site so implementations can keep one search cursor
/// per distinct delay.
class PastAccessor {
public:
    virtual ~PastAccessor() = default;
    virtual PastSample sample(std::size_t index, double time, std::size_t site) = 0;
};

/// Evaluation context with its own scratch storage. One Evaluator per thread;
/// the ExecutableSystem itself is never modified.
class Evaluator {
public:
    explicit Evaluator(const ExecutableSystem& exec) : exec_(&exec), regs_(exec.registers, 0.0) {}

    const ExecutableSystem& system() const noexcept { return *exec_; }

    void drift(double t, std::span<const double> y, std::span<const double> params, PastAccessor* past,
               std::span<double> out) {
        run(Section::drift, t, y, params, past, out);
    }

    void diffusion(double t, std::span<const double> y, std::span<const double> params, PastAccessor* past,
                   std::span<double> out) {
        if (!exec_->has_diffusion) throw ContractViolation("system has no diffusion program");
        run(Section::diffusion, t, y, params, past, out);
    }

private:
    void run(Section section, double t, std::span<const double> y, std::span<const double> params, PastAccessor* past,
             std::span<double> out) {
        const auto& ex = *exec_;
        if (params.size() != ex.parameters.size())
            throw ContractViolation("expected " + std::to_string(ex.parameters.size()) + " parameter values, got " +
                                    std::to_string(params.size()));
        if (ex.uses_past && past == nullptr)
            throw ContractViolation("system uses delayed states but no past accessor was supplied");
        if (y.size() < ex.dimension || out.size() < ex.dimension)
            throw ContractViolation("state or output vector shorter than the system dimension");
        for (const auto& c : ex.chunks) {
            if (c.section != Section::helpers && c.section != section) continue;
            if (ex.backend == Backend::bytecode) {
                run_bytecode(c, t, y, params, past, out);
            } else {
                run_tree(c, t, y, params, past, out);
            }
        }
    }

    void run_bytecode(const Chunk& chunk, double t, std::span<const double> y, std::span<const double> params,
                      PastAccessor* past, std::span<double> out) {
        double* r = regs_.data();
        const Instruction* code = exec_->code.data();
        for (std::uint32_t i = chunk.code_begin; i < chunk.code_end; ++i) {
            const Instruction& in = code[i];
            switch (in.op) {
            case Op::constant: r[in.dst] = in.value; break;
            case Op::time: r[in.dst] = t; break;
            case Op::state: r[in.dst] = y[in.a]; break;
            case Op::param: r[in.dst] = params[in.a]; break;
            case Op::past:
                if (past == nullptr) [[unlikely]]
                    throw ContractViolation("delayed state requested without a past accessor");
                r[in.dst] = past->sample(in.a, r[in.b], in.c).value;
                break;
            case Op::add: r[in.dst] = r[in.a] + r[in.b]; break;
            case Op::sub: r[in.dst] = r[in.a] - r[in.b]; break;
            case Op::mul: r[in.dst] = r[in.a] * r[in.b]; break;
            case Op::div: r[in.dst] = r[in.a] / r[in.b]; break;
            case Op::neg: r[in.dst] = -r[in.a]; break;
            case Op::square: r[in.dst] = r[in.a] * r[in.a]; break;
            case Op::pow: r[in.dst] = std::pow(r[in.a], r[in.b]); break;
            case Op::call: r[in.dst] = apply_fn(in.fn, r[in.a]); break;
            case Op::store: out[in.a] = r[in.b]; break;
            case Op::call_sub: r[in.dst] = apply_fn(in.fn, r[in.a] - r[in.b]); break;
            case Op::add_call: r[in.dst] = r[in.c] + apply_fn(in.fn, r[in.a]); break;
            case Op::add_call_sub: r[in.dst] = r[in.c] + apply_fn(in.fn, r[in.a] - r[in.b]); break;
            case Op::madd: r[in.dst] = r[in.c] + r[in.a] * r[in.b]; break;
            case Op::msub: r[in.dst] = r[in.c] - r[in.a] * r[in.b]; break;
            case Op::helper:
            case Op::set_helper: break;
            }
        }
    }

    struct TreeFrame {
        const Instruction* code;
        const double* helpers;
        double t;
        std::span<const double> y;
        std::span<const double> params;
        PastAccessor* past;

        double eval(std::uint32_t node) const {
            const Instruction& in = code[node];
            switch (in.op) {
            case Op::constant: return in.value;
            case Op::time: return t;
            case Op::state: return y[in.a];
            case Op::param: return params[in.a];
            case Op::past: return past->sample(in.a, eval(in.b), in.c).value;
            case Op::helper: return helpers[in.a];
            case Op::add: return eval(in.a) + eval(in.b);
            case Op::sub: return eval(in.a) - eval(in.b);
            case Op::mul: return eval(in.a) * eval(in.b);
            case Op::div: return eval(in.a) / eval(in.b);
            case Op::neg: return -eval(in.a);
            case Op::square: {
                double v = eval(in.a);
                return v * v;
            }
            case Op::pow: return std::pow(eval(in.a), eval(in.b));
            case Op::call: return apply_fn(in.fn, eval(in.a));
            default: break;
            }
            return 0.0;
        }
    };

    void run_tree(const Chunk& chunk, double t, std::span<const double> y, std::span<const double> params,
                  PastAccessor* past, std::span<double> out) {
        TreeFrame frame{exec_->code.data(), regs_.data(), t, y, params, past};
        const Instruction* code = exec_->code.data();
        for (std::uint32_t i = chunk.code_begin; i < chunk.code_end; ++i) {
            const Instruction& in = code[i];
            if (in.op == Op::store) {
                out[in.a] = frame.eval(in.b);
            } else if (in.op == Op::set_helper) {
                regs_[in.a] = frame.eval(in.b);
            }
        }
    }

    const ExecutableSystem* exec_;
    std::vector<double> regs_;
};

inline std::vector<double> evaluate_drift(const ExecutableSystem& exec, double t, std::span<const double> y,
                                          PastAccessor* past = nullptr, std::span<const double> params = {}) {
    Evaluator ev(exec);
    std::vector<double> out(exec.dimension);
    ev.drift(t, y, params, past, out);
    return out;
}

inline std::vector<double> evaluate_diffusion(const ExecutableSystem& exec, double t, std::span<const double> y,
                                              std::span<const double> params = {}, PastAccessor* past = nullptr) {
    Evaluator ev(exec);
    std::vector<double> out(exec.dimension);
    ev.diffusion(t, y, params, past, out);
    return out;
}

} // namespace symde
