#pragma once

// Compiled-program files.
//
//   "SYMF" | u32 version | u32 n | u8 backend | u8 flags | u32 registers |
//   u32 sites | u32 #instructions | instructions | u32 #chunks | chunks |
//   u32 #parameters | (u32 length, bytes)* | u32 crc32 of everything before
//
// Integers are little-endian; doubles are stored as their IEEE-754 bit
// pattern so round trips are exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include "symde/errors.hpp"
#include "symde/executable.hpp"

namespace symde {

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
    std::vector<std::uint8_t> bytes;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    void need(std::size_t k) const {
        if (size_ - pos_ < k) throw LoadError("compiled file is truncated");
    }
    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        std::uint32_t len = u32();
        need(len);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
        pos_ += len;
        return s;
    }
    std::size_t position() const { return pos_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
    return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

// Operand bounds checks so a well-formed but hostile file cannot index out of range.
inline void check_program(const ExecutableSystem& ex) {
    const std::size_t ncode = ex.code.size();
    const bool tree = ex.backend == Backend::treewalk;
    auto bad = [](const std::string& what) { throw LoadError("invalid compiled program: " + what); };
    for (std::size_t i = 0; i < ncode; ++i) {
        const Instruction& in = ex.code[i];
        if (static_cast<unsigned>(in.op) > static_cast<unsigned>(last_op)) bad("unknown opcode");
        if (static_cast<unsigned>(in.fn) > static_cast<unsigned>(Fn::sign)) bad("unknown function");
        auto operand = [&](std::uint32_t r) {
            if (tree ? r >= i : r >= ex.registers) bad("operand out of range");
        };
        if (!tree && in.op != Op::store && in.op != Op::set_helper && in.dst >= ex.registers)
            bad("destination out of range");
        switch (in.op) {
        case Op::state:
            if (in.a >= ex.dimension) bad("state index out of range");
            break;
        case Op::param:
            if (in.a >= ex.parameters.size()) bad("parameter slot out of range");
            break;
        case Op::past:
            if (in.a >= ex.dimension || in.c >= ex.sites) bad("delayed access out of range");
            operand(in.b);
            break;
        case Op::helper:
            if (!tree || in.a >= ex.registers) bad("helper slot out of range");
            break;
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div:
        case Op::pow:
            operand(in.a);
            operand(in.b);
            break;
        case Op::neg:
        case Op::square:
        case Op::call: operand(in.a); break;
        case Op::call_sub:
            if (tree) bad("fused instruction in a tree program");
            operand(in.a);
            operand(in.b);
            break;
        case Op::add_call:
            if (tree) bad("fused instruction in a tree program");
            operand(in.a);
            operand(in.c);
            break;
        case Op::add_call_sub:
        case Op::madd:
        case Op::msub:
            if (tree) bad("fused instruction in a tree program");
            operand(in.a);
            operand(in.b);
            operand(in.c);
            break;
        case Op::store:
            if (in.a >= ex.dimension) bad("output index out of range");
            operand(in.b);
            break;
        case Op::set_helper:
            if (!tree || in.a >= ex.registers) bad("helper slot out of range");
            operand(in.b);
            break;
        default: break;
        }
    }
    for (const auto& c : ex.chunks) {
        if (static_cast<unsigned>(c.section) > static_cast<unsigned>(Section::diffusion)) bad("unknown section");
        if (c.code_begin > c.code_end || c.code_end > ncode) bad("chunk code range");
        if (c.section != Section::helpers && (c.out_begin > c.out_end || c.out_end > ex.dimension))
            bad("chunk output range");
    }
}

} // namespace detail

inline std::vector<std::uint8_t> serialize(const ExecutableSystem& ex) {
    detail::ByteWriter w;
    for (char c : std::string("SYMF")) w.u8(static_cast<std::uint8_t>(c));
    w.u32(ex.version);
    w.u32(static_cast<std::uint32_t>(ex.dimension));
    w.u8(static_cast<std::uint8_t>(ex.backend));
    w.u8(static_cast<std::uint8_t>((ex.uses_past ? 1 : 0) | (ex.has_diffusion ? 2 : 0)));
    w.u32(static_cast<std::uint32_t>(ex.registers));
    w.u32(static_cast<std::uint32_t>(ex.sites));
    w.u32(static_cast<std::uint32_t>(ex.code.size()));
    for (const auto& in : ex.code) {
        w.u8(static_cast<std::uint8_t>(in.op));
        w.u8(static_cast<std::uint8_t>(in.fn));
        w.u32(in.dst);
        w.u32(in.a);
        w.u32(in.b);
        w.u32(in.c);
        w.f64(in.value);
    }
    w.u32(static_cast<std::uint32_t>(ex.chunks.size()));
    for (const auto& c : ex.chunks) {
        w.u8(static_cast<std::uint8_t>(c.section));
        w.u32(c.out_begin);
        w.u32(c.out_end);
        w.u32(c.code_begin);
        w.u32(c.code_end);
    }
    w.u32(static_cast<std::uint32_t>(ex.parameters.size()));
    for (const auto& p : ex.parameters) w.str(p);
    w.u32(detail::crc32_of(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

inline ExecutableSystem deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12) throw LoadError("compiled file is truncated");
    if (std::memcmp(bytes.data(), "SYMF", 4) != 0) throw LoadError("not a compiled program (bad magic)");
    const std::size_t body = bytes.size() - 4;
    detail::ByteReader tail(bytes.data() + body, 4);
    std::uint32_t stored = tail.u32();

    detail::ByteReader r(bytes.data(), body);
    r.u32();
    std::uint32_t version = r.u32();
    if (version != ExecutableSystem::format_version)
        throw LoadError("unsupported compiled-file version " + std::to_string(version) + " (expected " +
                        std::to_string(ExecutableSystem::format_version) + ")");
    if (detail::crc32_of(bytes.data(), body) != stored) throw LoadError("checksum mismatch in compiled file");

    ExecutableSystem ex;
    ex.version = version;
    ex.dimension = r.u32();
    std::uint8_t backend = r.u8();
    if (backend > static_cast<std::uint8_t>(Backend::treewalk)) throw LoadError("unknown backend tag");
    ex.backend = static_cast<Backend>(backend);
    std::uint8_t flags = r.u8();
    ex.uses_past = (flags & 1) != 0;
    ex.has_diffusion = (flags & 2) != 0;
    ex.registers = r.u32();
    ex.sites = r.u32();
    std::uint32_t ncode = r.u32();
    r.need(static_cast<std::size_t>(ncode) * 26);
    ex.code.resize(ncode);
    for (auto& in : ex.code) {
        in.op = static_cast<Op>(r.u8());
        in.fn = static_cast<Fn>(r.u8());
        in.dst = r.u32();
        in.a = r.u32();
        in.b = r.u32();
        in.c = r.u32();
        in.value = r.f64();
    }
    std::uint32_t nchunks = r.u32();
    r.need(static_cast<std::size_t>(nchunks) * 17);
    ex.chunks.resize(nchunks);
    for (auto& c : ex.chunks) {
        c.section = static_cast<Section>(r.u8());
        c.out_begin = r.u32();
        c.out_end = r.u32();
        c.code_begin = r.u32();
        c.code_end = r.u32();
    }
    std::uint32_t nparams = r.u32();
    for (std::uint32_t i = 0; i < nparams; ++i) ex.parameters.push_back(r.str());
    if (r.position() != body) throw LoadError("trailing bytes in compiled file");
    detail::check_program(ex);
    return ex;
}

inline void save(const ExecutableSystem& ex, const std::string& path) {
    auto bytes = serialize(ex);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

inline ExecutableSystem load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

} // namespace symde
