#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "symde/cse.hpp"
#include "symde/errors.hpp"
#include "symde/executable.hpp"
#include "symde/expression.hpp"
#include "symde/simplify.hpp"
#include "symde/system.hpp"

namespace symde {

struct LowerOptions {
    bool apply_simplify = true;
    bool apply_cse = false;
    std::size_t chunk_size = 64;
    Backend backend = Backend::bytecode;
    /// Bytecode only: merge single-use producer/consumer pairs into fused instructions.
    bool fuse = true;
};

namespace detail {

class Emitter {
public:
    Emitter(ExecutableSystem& out, const std::unordered_map<std::string, std::uint32_t>& params)
        : out_(out), params_(params), tree_(out.backend == Backend::treewalk) {}

    void begin_chunk() { memo_.clear(); }

    /// Bytecode: register holding the helper. Treewalk: helper slot.
    void bind_helper(const std::string& name, std::uint32_t id) { helpers_[name] = id; }

    std::uint32_t next_helper_slot() const { return static_cast<std::uint32_t>(helpers_.size()); }

    std::uint32_t emit(const Expr& e) {
        if (!tree_) {
            if (auto it = memo_.find(e); it != memo_.end()) return it->second;
        }
        std::uint32_t id = emit_uncached(e);
        if (!tree_) memo_.emplace(e, id);
        return id;
    }

    void store(std::uint32_t output, std::uint32_t value) {
        Instruction in;
        in.op = Op::store;
        in.a = output;
        in.b = value;
        out_.code.push_back(in);
    }

    void set_helper(std::uint32_t slot, std::uint32_t value) {
        Instruction in;
        in.op = Op::set_helper;
        in.dst = slot;
        in.a = slot;
        in.b = value;
        out_.code.push_back(in);
    }

    std::uint32_t registers() const { return next_reg_; }
    std::size_t sites() const { return sites_.size(); }

private:
    std::uint32_t push(Instruction in) {
        if (tree_) {
            in.dst = static_cast<std::uint32_t>(out_.code.size());
        } else {
            in.dst = next_reg_++;
        }
        out_.code.push_back(in);
        return in.dst;
    }

    std::uint32_t op2(Op op, std::uint32_t a, std::uint32_t b) {
        Instruction in;
        in.op = op;
        in.a = a;
        in.b = b;
        return push(in);
    }

    std::uint32_t op1(Op op, std::uint32_t a, Fn fn = Fn::sin) {
        Instruction in;
        in.op = op;
        in.fn = fn;
        in.a = a;
        return push(in);
    }

    std::uint32_t constant(double v) { return emit(Expr::constant(v)); }

    // A summand c*rest with c < 0 is emitted as a subtraction of |c|*rest.
    static bool split_negative(const Expr& term, Expr& magnitude) {
        if (term.kind() == Kind::constant && term.value() < 0) {
            magnitude = Expr::constant(-term.value());
            return true;
        }
        if (term.kind() != Kind::product) return false;
        const auto& f = term.args();
        if (f.empty() || f[0].kind() != Kind::constant || !(f[0].value() < 0)) return false;
        std::vector<Expr> rest(f.begin() + 1, f.end());
        if (f[0].value() != -1.0) rest.insert(rest.begin(), Expr::constant(-f[0].value()));
        magnitude = Expr::product(std::move(rest));
        return true;
    }

    std::uint32_t emit_sum(const Expr& e) {
        std::uint32_t acc = 0;
        bool have = false;
        std::vector<std::pair<bool, Expr>> terms;
        for (const auto& t : e.args()) {
            Expr mag;
            if (split_negative(t, mag)) {
                terms.emplace_back(true, mag);
            } else {
                terms.emplace_back(false, t);
            }
        }
        // Lead with a positive term when one exists so no leading negation is needed.
        auto lead = std::find_if(terms.begin(), terms.end(), [](const auto& p) { return !p.first; });
        if (lead != terms.end()) std::rotate(terms.begin(), lead, lead + 1);
        for (const auto& [negative, term] : terms) {
            std::uint32_t v = emit(term);
            if (!have) {
                acc = negative ? op1(Op::neg, v) : v;
                have = true;
            } else {
                acc = op2(negative ? Op::sub : Op::add, acc, v);
            }
        }
        return acc;
    }

    std::uint32_t emit_product(const Expr& e) {
        double scale = 1.0;
        std::vector<Expr> num;
        std::vector<Expr> den;
        for (const auto& f : e.args()) {
            if (f.kind() == Kind::constant) {
                scale *= f.value();
            } else if (f.kind() == Kind::power && f.args()[1].kind() == Kind::constant && f.args()[1].value() < 0) {
                double k = -f.args()[1].value();
                den.push_back(k == 1.0 ? f.args()[0] : Expr::power(f.args()[0], Expr::constant(k)));
            } else {
                num.push_back(f);
            }
        }
        bool negate = false;
        if (scale == -1.0) {
            negate = true;
            scale = 1.0;
        }
        std::uint32_t acc = 0;
        bool have = false;
        if (scale != 1.0 || (num.empty() && den.empty())) {
            acc = constant(scale);
            have = true;
        }
        for (const auto& f : num) {
            std::uint32_t v = emit(f);
            acc = have ? op2(Op::mul, acc, v) : v;
            have = true;
        }
        if (!have) {
            acc = constant(1.0);
            have = true;
        }
        for (const auto& d : den) acc = op2(Op::div, acc, emit(d));
        return negate ? op1(Op::neg, acc) : acc;
    }

    std::uint32_t emit_power(const Expr& e) {
        const Expr& base = e.args()[0];
        const Expr& ex = e.args()[1];
        if (ex.kind() == Kind::constant) {
            double k = ex.value();
            if (k == 2.0) return op1(Op::square, emit(base));
            if (k == 0.5) return op1(Op::call, emit(base), Fn::sqrt);
            if (k == -1.0) return op2(Op::div, constant(1.0), emit(base));
            if (k == -0.5) return op2(Op::div, constant(1.0), op1(Op::call, emit(base), Fn::sqrt));
        }
        std::uint32_t b = emit(base);
        return op2(Op::pow, b, emit(ex));
    }

    std::uint32_t emit_uncached(const Expr& e) {
        Instruction in;
        switch (e.kind()) {
        case Kind::constant:
            in.op = Op::constant;
            in.value = e.value();
            return push(in);
        case Kind::time:
            in.op = Op::time;
            return push(in);
        case Kind::state:
            if (e.index() >= out_.dimension)
                throw LoweringError("state index " + std::to_string(e.index()) + " out of range");
            in.op = Op::state;
            in.a = static_cast<std::uint32_t>(e.index());
            return push(in);
        case Kind::past_state: {
            if (e.index() >= out_.dimension)
                throw LoweringError("delayed state index " + std::to_string(e.index()) + " out of range");
            std::uint32_t time = emit(e.at());
            auto [site, fresh] = sites_.try_emplace(e.at(), static_cast<std::uint32_t>(sites_.size()));
            (void)fresh;
            in.op = Op::past;
            in.a = static_cast<std::uint32_t>(e.index());
            in.b = time;
            in.c = site->second;
            return push(in);
        }
        case Kind::parameter: {
            auto it = params_.find(e.name());
            if (it == params_.end()) throw LoweringError("unknown parameter '" + e.name() + "'");
            in.op = Op::param;
            in.a = it->second;
            return push(in);
        }
        case Kind::helper: {
            auto it = helpers_.find(e.name());
            if (it == helpers_.end()) throw LoweringError("unknown helper '" + e.name() + "'");
            if (!tree_) return it->second;
            in.op = Op::helper;
            in.a = it->second;
            return push(in);
        }
        case Kind::sum: return emit_sum(e);
        case Kind::product: return emit_product(e);
        case Kind::power: return emit_power(e);
        case Kind::call: return op1(Op::call, emit(e.args()[0]), e.fn());
        }
        throw LoweringError("unsupported expression node");
    }

    ExecutableSystem& out_;
    const std::unordered_map<std::string, std::uint32_t>& params_;
    bool tree_;
    std::uint32_t next_reg_ = 0;
    std::unordered_map<std::string, std::uint32_t> helpers_;
    std::unordered_map<Expr, std::uint32_t, ExprHash, ExprEqual> memo_;
    std::unordered_map<Expr, std::uint32_t, ExprHash, ExprEqual> sites_;
};

// Peephole pass over a bytecode program. An instruction whose result is used
// exactly once, by the instruction right after it, is merged with that
// consumer. The fused forms compute the same operations in the same order.
inline void fuse_bytecode(ExecutableSystem& ex) {
    std::vector<std::uint32_t> uses(ex.registers, 0);
    for (const auto& in : ex.code) {
        switch (in.op) {
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
        case Op::pow:
            ++uses[in.a];
            ++uses[in.b];
            break;
        case Op::neg:
        case Op::square:
        case Op::call: ++uses[in.a]; break;
        case Op::past:
        case Op::store: ++uses[in.b]; break;
        default: break;
        }
    }
    auto single = [&](const Instruction& p) { return uses[p.dst] == 1; };

    std::vector<Instruction> code;
    code.reserve(ex.code.size());
    for (auto& chunk : ex.chunks) {
        std::uint32_t begin = static_cast<std::uint32_t>(code.size());
        for (std::uint32_t i = chunk.code_begin; i < chunk.code_end; ++i) {
            Instruction x = ex.code[i];
            if (code.size() > begin && single(code.back())) {
                Instruction& p = code.back();
                if (x.op == Op::call && p.op == Op::sub && x.a == p.dst) {
                    p.op = Op::call_sub;
                    p.fn = x.fn;
                    p.dst = x.dst;
                    continue;
                }
                if (x.op == Op::add && (p.op == Op::call || p.op == Op::call_sub || p.op == Op::mul) &&
                    (x.a == p.dst) != (x.b == p.dst)) {
                    p.c = x.a == p.dst ? x.b : x.a;
                    p.op = p.op == Op::call ? Op::add_call : p.op == Op::call_sub ? Op::add_call_sub : Op::madd;
                    p.dst = x.dst;
                    continue;
                }
                if (x.op == Op::sub && p.op == Op::mul && x.b == p.dst && x.a != p.dst) {
                    p.c = x.a;
                    p.op = Op::msub;
                    p.dst = x.dst;
                    continue;
                }
            }
            code.push_back(x);
        }
        chunk.code_begin = begin;
        chunk.code_end = static_cast<std::uint32_t>(code.size());
    }
    ex.code = std::move(code);
}

} // namespace detail

/// Lowers a problem statement into an executable program. Helper values are
/// computed once per evaluation, ahead of every output chunk.
inline ExecutableSystem lower(const SystemSpec& spec, const LowerOptions& options = {}) {
    if (options.chunk_size == 0) throw UsageError("chunk_size must be positive");
    if (spec.dimension == 0 || spec.drift.size() != spec.dimension)
        throw ContractViolation("drift length does not match the dimension");
    if (spec.has_diffusion() && spec.diffusion.size() != spec.dimension)
        throw ContractViolation("diffusion length does not match the dimension");

    ExecutableSystem out;
    out.dimension = spec.dimension;
    out.backend = options.backend;
    out.uses_past = spec.uses_past();
    out.has_diffusion = spec.has_diffusion();
    out.parameters = spec.parameters;

    std::unordered_map<std::string, std::uint32_t> slots;
    for (std::size_t i = 0; i < spec.parameters.size(); ++i) {
        if (!slots.emplace(spec.parameters[i], static_cast<std::uint32_t>(i)).second)
            throw ContractViolation("parameter '" + spec.parameters[i] + "' declared twice");
    }

    std::vector<HelperDefinition> helpers = spec.helpers;
    std::vector<Expr> outputs = spec.drift;
    outputs.insert(outputs.end(), spec.diffusion.begin(), spec.diffusion.end());
    if (options.apply_simplify) {
        for (auto& h : helpers) h.value = simplify_basic(h.value);
        outputs = simplify_basic(outputs);
    }
    if (options.apply_cse) {
        std::unordered_set<std::string> taken;
        for (const auto& h : helpers) taken.insert(h.name);
        std::string prefix = "_cse";
        while (std::any_of(taken.begin(), taken.end(), [&](const std::string& n) { return n.rfind(prefix, 0) == 0; }))
            prefix += "_";
        CseResult cse = eliminate_common_subexpressions(outputs, prefix);
        helpers.insert(helpers.end(), cse.defs.begin(), cse.defs.end());
        outputs = std::move(cse.rewritten);
    }

    detail::Emitter em(out, slots);
    if (!helpers.empty()) {
        Chunk c;
        c.section = Section::helpers;
        c.out_begin = 0;
        c.out_end = static_cast<std::uint32_t>(helpers.size());
        c.code_begin = static_cast<std::uint32_t>(out.code.size());
        em.begin_chunk();
        std::unordered_set<std::string> seen;
        for (const auto& h : helpers) {
            if (!seen.insert(h.name).second) throw ContractViolation("helper '" + h.name + "' defined twice");
            std::uint32_t v = em.emit(h.value);
            if (out.backend == Backend::treewalk) {
                std::uint32_t slot = em.next_helper_slot();
                em.set_helper(slot, v);
                em.bind_helper(h.name, slot);
            } else {
                em.bind_helper(h.name, v);
            }
        }
        c.code_end = static_cast<std::uint32_t>(out.code.size());
        out.chunks.push_back(c);
    }

    auto section = [&](Section s, std::size_t offset) {
        for (std::size_t begin = 0; begin < spec.dimension; begin += options.chunk_size) {
            std::size_t end = std::min(spec.dimension, begin + options.chunk_size);
            Chunk c;
            c.section = s;
            c.out_begin = static_cast<std::uint32_t>(begin);
            c.out_end = static_cast<std::uint32_t>(end);
            c.code_begin = static_cast<std::uint32_t>(out.code.size());
            em.begin_chunk();
            for (std::size_t i = begin; i < end; ++i)
                em.store(static_cast<std::uint32_t>(i), em.emit(outputs[offset + i]));
            c.code_end = static_cast<std::uint32_t>(out.code.size());
            out.chunks.push_back(c);
        }
    };
    section(Section::drift, 0);
    if (spec.has_diffusion()) section(Section::diffusion, spec.dimension);

    out.sites = em.sites();
    out.registers = out.backend == Backend::bytecode ? em.registers() : em.next_helper_slot();
    if (out.backend == Backend::bytecode && options.fuse) detail::fuse_bytecode(out);
    return out;
}

} // namespace symde
