// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container shared by every trainable classifier.
//
// Layout:
//   "JAMSENSE-CKPT\n"
//   u64 little-endian header length
//   JSON header {version, type, payload, tensors: [{name, shape, offset, count}], checksum}
//   parameter block, little-endian IEEE-754 binary64, tensors back to back
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "error.hpp"
#include "mhdnn.hpp"
#include "tensor.hpp"

namespace jamsense::ckpt {

using nn::NamedTensor;
using nn::Tensor;

inline constexpr std::string_view kMagic = "JAMSENSE-CKPT\n";
inline constexpr int kVersion = 1;

struct Checkpoint {
    std::string type;
    nlohmann::json payload;
    std::vector<NamedTensor> tensors;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
    std::string block;
    nlohmann::json table = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : c.tensors) {
        table.push_back({{"name", t.name}, {"shape", t.value.shape}, {"offset", offset}, {"count", t.value.size()}});
        for (double v : t.value.data) detail::put_u64(block, std::bit_cast<std::uint64_t>(v));
        offset += t.value.size();
    }
    const nlohmann::json header = {{"version", kVersion},
                                   {"type", c.type},
                                   {"payload", c.payload},
                                   {"tensors", table},
                                   {"checksum", detail::hex64(fnv1a(block))}};
    const std::string text = header.dump();
    std::string len;
    detail::put_u64(len, text.size());
    out << kMagic << len << text << block;
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
    std::string magic(kMagic.size(), '\0');
    if (!in.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kMagic)
        throw ParseError("checkpoint: bad magic");
    char lenbuf[8];
    if (!in.read(lenbuf, 8)) throw ParseError("checkpoint: truncated header length");
    const std::uint64_t hlen = detail::get_u64(lenbuf);
    if (hlen > (1u << 26)) throw ParseError("checkpoint: implausible header length");
    std::string text(hlen, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(hlen))) throw ParseError("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: header is not JSON: ") + e.what());
    }
    Checkpoint c;
    std::uint64_t total = 0;
    std::string checksum;
    try {
        if (header.at("version").get<int>() != kVersion)
            throw ParseError("checkpoint: unsupported version " + header.at("version").dump());
        c.type = header.at("type").get<std::string>();
        c.payload = header.at("payload");
        checksum = header.at("checksum").get<std::string>();
        for (const auto& e : header.at("tensors")) {
            NamedTensor t{e.at("name").get<std::string>(), Tensor(e.at("shape").get<std::vector<std::size_t>>())};
            if (e.at("count").get<std::uint64_t>() != t.value.size() || e.at("offset").get<std::uint64_t>() != total)
                throw ParseError("checkpoint: inconsistent tensor table entry '" + t.name + "'");
            total += t.value.size();
            c.tensors.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
    }
    std::string block(total * 8, '\0');
    if (!in.read(block.data(), static_cast<std::streamsize>(block.size())))
        throw ParseError("checkpoint: truncated parameter block");
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint: trailing bytes");
    if (detail::hex64(fnv1a(block)) != checksum) throw ParseError("checkpoint: checksum mismatch");
    std::size_t pos = 0;
    for (auto& t : c.tensors)
        for (auto& v : t.value.data) {
            v = std::bit_cast<double>(detail::get_u64(block.data() + pos));
            pos += 8;
        }
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_checkpoint(out, c);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_checkpoint(in);
}

/// Copies stored tensors into `dst`, requiring identical names and shapes.
inline void restore_tensors(const std::vector<NamedTensor>& src, std::vector<NamedTensor>& dst) {
    if (src.size() != dst.size())
        throw ParseError("checkpoint: expected " + std::to_string(dst.size()) + " tensors, found " +
                         std::to_string(src.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (src[i].name != dst[i].name || src[i].value.shape != dst[i].value.shape)
            throw ParseError("checkpoint: tensor '" + src[i].name + "' " + nn::shape_string(src[i].value.shape) +
                             " does not match '" + dst[i].name + "' " + nn::shape_string(dst[i].value.shape));
        dst[i].value = src[i].value;
    }
}

// ---------------------------------------------------------------------------
// MH-DNN

inline constexpr const char* kMhdnnTag = "mhdnn";

struct TrainedModel {
    nn::Model model;
    dataset::NormStats norm;
};

inline Checkpoint to_checkpoint(const nn::Model& m, const dataset::NormStats& norm) {
    return {kMhdnnTag, {{"arch", m.arch}, {"seed", m.seed}, {"norm", norm}}, m.params};
}

inline TrainedModel mhdnn_from_checkpoint(const Checkpoint& c) {
    if (c.type != kMhdnnTag) throw ParseError("checkpoint: expected type '" + std::string(kMhdnnTag) + "', got '" + c.type + "'");
    TrainedModel out;
    try {
        out.model = nn::build_mhdnn(c.payload.at("arch").get<nn::ArchConfig>(), c.payload.at("seed").get<std::uint64_t>());
        out.norm = c.payload.at("norm").get<dataset::NormStats>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: malformed payload: ") + e.what());
    }
    restore_tensors(c.tensors, out.model.params);
    return out;
}

inline void save_model(const std::filesystem::path& path, const nn::Model& m, const dataset::NormStats& norm) {
    save_checkpoint(path, to_checkpoint(m, norm));
}

inline TrainedModel load_model(const std::filesystem::path& path) { return mhdnn_from_checkpoint(load_checkpoint(path)); }

}  // namespace jamsense::ckpt
