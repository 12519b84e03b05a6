#pragma once

// File formats around the pipeline: PGM masks, JSON manifests, ledgers and
// refinement logs, router weight files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prunekit/container.hpp"
#include "prunekit/image.hpp"
#include "prunekit/memory.hpp"
#include "prunekit/pipeline.hpp"
#include "prunekit/router.hpp"

namespace prunekit {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.3.0";

// --- PGM ------------------------------------------------------------------

/// Binary P5, maxval 255, foreground 255.
inline void write_pgm(const std::filesystem::path& path, const BinaryMap& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open for writing");
    f << "P5\n" << m.width << " " << m.height << "\n255\n";
    std::vector<char> row(static_cast<std::size_t>(m.width));
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) row[static_cast<std::size_t>(x)] = m.at(y, x) ? static_cast<char>(255) : 0;
        f.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw DataError(path.string() + ": write failed");
}

/// Reads a P5 map; pixels above half of maxval are foreground.
inline BinaryMap read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open");
    auto token = [&]() {
        std::string s;
        char c;
        while (f.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(f, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!s.empty()) break;
                continue;
            }
            s.push_back(c);
        }
        return s;
    };
    if (token() != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed PGM header");
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw DataError(path.string() + ": unsupported PGM header");
    BinaryMap m(h, w);
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() != static_cast<std::streamsize>(buf.size())) throw DataError(path.string() + ": truncated PGM payload");
    for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] * 2 > maxval ? 1 : 0;
    return m;
}

// --- run manifest -----------------------------------------------------------

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string command;
    Json config = Json::object();
    Json seeds = Json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    bool operator==(const RunManifest&) const = default;
};

inline Json to_json(const RunManifest& m) {
    Json j;
    j["tool_version"] = m.tool_version;
    j["command"] = m.command;
    j["config"] = m.config;
    j["seeds"] = m.seeds;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    return j;
}

inline std::string emit_manifest(const RunManifest& m) { return to_json(m).dump(2) + "\n"; }

inline RunManifest parse_manifest(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    try {
        RunManifest m;
        m.tool_version = j.at("tool_version").get<std::string>();
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.seeds = j.at("seeds");
        m.inputs = j.at("inputs").get<std::vector<std::string>>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        return m;
    } catch (const Json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open for writing");
    f << text;
    if (!f) throw DataError(path.string() + ": write failed");
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path.string() + ": cannot open");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// --- ledger and refinement log --------------------------------------------

/// Deterministic fields at the top level; wall-clock numbers under "timing".
inline Json to_json(const CostLedger& l, std::size_t frames) {
    Json j;
    j["frames"] = frames;
    j["flops_attention"] = l.flops_attention;
    j["flops_total"] = l.flops_total;
    j["peak_memory_tokens"] = l.peak_memory_tokens;
    j["peak_memory_bytes"] = l.peak_memory_bytes;
    j["frame_attention_flops"] = l.frame_attention_flops;
    j["frame_memory_bytes"] = l.frame_memory_bytes;
    Json timing = Json::object();
    for (const auto& [stage, ms] : l.wall_clock_ms) timing[stage + "_ms"] = ms;
    const double total = l.total_ms();
    timing["total_ms"] = total;
    timing["fps"] = total > 0.0 ? 1000.0 * static_cast<double>(frames) / total : 0.0;
    j["timing"] = timing;
    return j;
}

inline Json to_json(const RefinementLog& log) {
    Json j;
    j["rounds_used"] = log.rounds_used;
    j["total_clicks"] = log.total_clicks();
    j["refinement_clicks"] = log.refinement_clicks();
    Json clicks = Json::array();
    for (const auto& c : log.clicks) {
        clicks.push_back({{"round", c.round},
                          {"frame", c.click.frame_index},
                          {"x", c.click.x},
                          {"y", c.click.y},
                          {"polarity", to_string(c.click.polarity)},
                          {"jf_before", c.jf_before},
                          {"jf_after", c.jf_after}});
    }
    j["clicks"] = clicks;
    return j;
}

// --- router weights -------------------------------------------------------

/// Rounds every parameter through float32, the storage precision, so the
/// in-memory weights equal what a reload produces.
inline RouterWeights quantize_f32(RouterWeights w) {
    auto q = [](double v) { return static_cast<double>(static_cast<float>(v)); };
    w.w1 = w.w1.unaryExpr(q);
    w.b1 = w.b1.unaryExpr(q);
    w.w2 = w.w2.unaryExpr(q);
    w.b2 = q(w.b2);
    return w;
}

/// Packs [w1 (input x hidden, row-major), b1, w2, b2] into one rank-1
/// container; the JSON sidecar records the layout and training settings.
inline void save_router(const std::filesystem::path& path, const RouterWeights& w, const Json& training = Json::object()) {
    const auto in = static_cast<std::size_t>(w.input_dim());
    const auto hid = static_cast<std::size_t>(w.hidden_dim());
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(in * hid + 2 * hid + 1)};
    t.data.reserve(t.dims[0]);
    for (Eigen::Index i = 0; i < w.w1.size(); ++i) t.data.push_back(static_cast<float>(w.w1.data()[i]));
    for (Eigen::Index i = 0; i < w.b1.size(); ++i) t.data.push_back(static_cast<float>(w.b1[i]));
    for (Eigen::Index i = 0; i < w.w2.size(); ++i) t.data.push_back(static_cast<float>(w.w2.data()[i]));
    t.data.push_back(static_cast<float>(w.b2));
    write_container(path, t);

    Json side;
    side["format"] = "prunekit-router";
    side["input_dim"] = in;
    side["hidden"] = hid;
    side["layout"] = "w1[input,hidden] b1[hidden] w2[hidden] b2";
    side["training"] = training;
    write_text(std::filesystem::path(path.string() + ".json"), side.dump(2) + "\n");
}

inline RouterWeights load_router(const std::filesystem::path& path) {
    const std::filesystem::path side_path(path.string() + ".json");
    Json side;
    try {
        side = Json::parse(read_text(side_path));
    } catch (const Json::exception& e) {
        throw DataError(side_path.string() + ": " + e.what());
    }
    const auto in = side.value("input_dim", std::size_t{0});
    const auto hid = side.value("hidden", std::size_t{0});
    if (in == 0 || hid == 0) throw DataError(side_path.string() + ": missing input_dim or hidden");
    const Tensor t = read_container(path);
    if (t.dims.size() != 1 || t.data.size() != in * hid + 2 * hid + 1) {
        throw DataError(path.string() + ": size does not match sidecar dims " + std::to_string(in) + "x" +
                        std::to_string(hid));
    }
    RouterWeights w;
    w.w1.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(hid));
    w.b1.resize(static_cast<Eigen::Index>(hid));
    w.w2.resize(static_cast<Eigen::Index>(hid), 1);
    std::size_t p = 0;
    for (Eigen::Index i = 0; i < w.w1.size(); ++i) w.w1.data()[i] = t.data[p++];
    for (Eigen::Index i = 0; i < w.b1.size(); ++i) w.b1[i] = t.data[p++];
    for (Eigen::Index i = 0; i < w.w2.size(); ++i) w.w2.data()[i] = t.data[p++];
    w.b2 = t.data[p];
    require_finite(w.w1, "router weights");
    return w;
}

}  // namespace prunekit
