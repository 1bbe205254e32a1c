#pragma once

// On-disk formats: trajectory directories (key/value config, little-endian
// float64 blobs with text indices, uint32 batch lists), hypergradient and
// error-trace blobs, and contribution CSVs with shortest round-trip numbers.

#include <array>
#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "hydra/error.hpp"
#include "hydra/hypergrad.hpp"
#include "hydra/linalg.hpp"
#include "hydra/trainer.hpp"

namespace hydra {

namespace fs = std::filesystem;

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
    return v;
}

inline std::uint64_t parse_uint(const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("not an unsigned integer: '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Raw blobs

inline void write_f64_blob(const fs::path& path, std::span<const double> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        char bytes[8];
        for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
        out.write(bytes, 8);
    }
}

inline std::vector<unsigned char> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Vec read_f64_blob(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() % 8 != 0) throw TruncatedFileError(path.string() + ": length is not a multiple of 8");
    Vec out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= std::uint64_t{bytes[8 * i + k]} << (8 * k);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

inline std::string read_text(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    return {bytes.begin(), bytes.end()};
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw FormatError("malformed key/value line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return kv;
}

// ---------------------------------------------------------------------------
// Trajectory directory

inline const char* to_string(Schedule::Kind k) {
    switch (k) {
    case Schedule::Kind::constant: return "constant";
    case Schedule::Kind::step_decay: return "step_decay";
    case Schedule::Kind::exponential: return "exponential";
    case Schedule::Kind::reduce_on_plateau: return "reduce_on_plateau";
    }
    return "constant";
}

inline Schedule::Kind parse_schedule_kind(const std::string& s) {
    if (s == "constant") return Schedule::Kind::constant;
    if (s == "step_decay") return Schedule::Kind::step_decay;
    if (s == "exponential") return Schedule::Kind::exponential;
    if (s == "reduce_on_plateau") return Schedule::Kind::reduce_on_plateau;
    throw ConfigError("unknown schedule: " + s);
}

inline std::string training_config_text(const TrainingConfig& c) {
    std::ostringstream o;
    o << "epochs = " << c.epochs << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "initial_lr = " << format_double(c.initial_lr) << "\n"
      << "schedule = " << to_string(c.schedule.kind) << "\n"
      << "schedule_factor = " << format_double(c.schedule.factor) << "\n"
      << "schedule_at_epoch = " << c.schedule.at_epoch << "\n"
      << "schedule_rate = " << format_double(c.schedule.rate) << "\n"
      << "schedule_patience = " << c.schedule.patience << "\n"
      << "schedule_rel_threshold = " << format_double(c.schedule.rel_threshold) << "\n"
      << "momentum = " << format_double(c.momentum) << "\n"
      << "weight_decay = " << format_double(c.weight_decay) << "\n"
      << "seed = " << c.seed << "\n"
      << "snapshot_stride = " << c.snapshot_stride << "\n";
    return o.str();
}

inline TrainingConfig training_config_from(const std::map<std::string, std::string>& kv) {
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError(std::string("trajectory config lacks ") + key);
        return it->second;
    };
    TrainingConfig c;
    c.epochs = parse_uint(get("epochs"));
    c.batch_size = parse_uint(get("batch_size"));
    c.initial_lr = parse_double(get("initial_lr"));
    c.schedule.kind = parse_schedule_kind(get("schedule"));
    c.schedule.factor = parse_double(get("schedule_factor"));
    c.schedule.at_epoch = parse_uint(get("schedule_at_epoch"));
    c.schedule.rate = parse_double(get("schedule_rate"));
    c.schedule.patience = parse_uint(get("schedule_patience"));
    c.schedule.rel_threshold = parse_double(get("schedule_rel_threshold"));
    c.momentum = parse_double(get("momentum"));
    c.weight_decay = parse_double(get("weight_decay"));
    c.seed = parse_uint(get("seed"));
    c.snapshot_stride = parse_uint(get("snapshot_stride"));
    return c;
}

/// Writes config.txt, snapshots.bin + snapshots.idx, batches.bin,
/// learning_rates.bin, losses.bin, data_weights.bin and final_params.bin.
inline void save_trajectory(const fs::path& dir, const TrajectoryRecord& rec) {
    fs::create_directories(dir);
    std::ostringstream cfg;
    cfg << training_config_text(rec.config) << "dataset_size = " << rec.dataset_size << "\n"
        << "total_steps = " << rec.total_steps() << "\n"
        << "checksum = " << rec.trajectory_checksum() << "\n";
    write_text(dir / "config.txt", cfg.str());

    Vec blob;
    std::ostringstream idx;
    for (const auto& [step, w] : rec.snapshots) {
        idx << step << " " << blob.size() << " " << w.size() << "\n";
        blob.insert(blob.end(), w.begin(), w.end());
    }
    write_f64_blob(dir / "snapshots.bin", blob);
    write_text(dir / "snapshots.idx", idx.str());

    std::ofstream b(dir / "batches.bin", std::ios::binary);
    if (!b) throw FormatError("cannot write batches.bin");
    auto put32 = [&b](std::uint32_t v) {
        char bytes[4];
        for (int k = 0; k < 4; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
        b.write(bytes, 4);
    };
    for (const auto& step : rec.batches.steps) {
        put32(static_cast<std::uint32_t>(step.size()));
        for (std::uint32_t i : step) put32(i);
    }
    b.close();

    write_f64_blob(dir / "learning_rates.bin", rec.learning_rates);
    write_f64_blob(dir / "losses.bin", rec.losses);
    write_f64_blob(dir / "data_weights.bin", rec.data_weights);
    write_f64_blob(dir / "final_params.bin", rec.final_params);
}

inline TrajectoryRecord load_trajectory(const fs::path& dir) {
    const auto kv = parse_key_values(read_text(dir / "config.txt"));
    TrajectoryRecord rec;
    rec.config = training_config_from(kv);
    rec.dataset_size = parse_uint(kv.at("dataset_size"));

    const Vec blob = read_f64_blob(dir / "snapshots.bin");
    std::istringstream idx(read_text(dir / "snapshots.idx"));
    for (std::size_t step, off, len; idx >> step >> off >> len;) {
        if (off + len > blob.size()) throw TruncatedFileError("snapshots.bin is shorter than its index");
        rec.snapshots[step] = Vec(blob.begin() + static_cast<std::ptrdiff_t>(off),
                                  blob.begin() + static_cast<std::ptrdiff_t>(off + len));
    }

    const auto bytes = read_file_bytes(dir / "batches.bin");
    std::size_t pos = 0;
    auto get32 = [&]() {
        if (pos + 4 > bytes.size()) throw TruncatedFileError("batches.bin is truncated");
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= std::uint32_t{bytes[pos + k]} << (8 * k);
        pos += 4;
        return v;
    };
    while (pos < bytes.size()) {
        const std::uint32_t n = get32();
        std::vector<std::uint32_t> step(n);
        for (auto& i : step) i = get32();
        rec.batches.steps.push_back(std::move(step));
    }

    rec.learning_rates = read_f64_blob(dir / "learning_rates.bin");
    rec.losses = read_f64_blob(dir / "losses.bin");
    rec.data_weights = read_f64_blob(dir / "data_weights.bin");
    rec.final_params = read_f64_blob(dir / "final_params.bin");
    if (rec.batches.steps.size() != rec.learning_rates.size() || rec.losses.size() != rec.learning_rates.size())
        throw CountMismatchError("trajectory blobs disagree on the number of steps");
    if (rec.data_weights.size() != rec.dataset_size) throw CountMismatchError("data_weights.bin has the wrong length");
    if (auto it = kv.find("checksum"); it != kv.end() && parse_uint(it->second) != rec.trajectory_checksum())
        throw FormatError("trajectory checksum mismatch in " + dir.string());
    return rec;
}

/// hypergrads.bin holds nabla then mom_deriv per state; hypergrads.idx lists
/// "sample_index mode step offset length".
inline void save_hypergrads(const fs::path& dir, std::span<const HypergradState> states,
                            const std::string& stem = "hypergrads") {
    fs::create_directories(dir);
    Vec blob;
    std::ostringstream idx;
    for (const auto& s : states) {
        idx << s.sample_index << " " << to_string(s.mode) << " " << s.step << " " << blob.size() << " "
            << s.nabla.size() << "\n";
        blob.insert(blob.end(), s.nabla.begin(), s.nabla.end());
        blob.insert(blob.end(), s.mom_deriv.begin(), s.mom_deriv.end());
    }
    write_f64_blob(dir / (stem + ".bin"), blob);
    write_text(dir / (stem + ".idx"), idx.str());
}

inline std::vector<HypergradState> load_hypergrads(const fs::path& dir, const std::string& stem = "hypergrads") {
    const Vec blob = read_f64_blob(dir / (stem + ".bin"));
    std::istringstream idx(read_text(dir / (stem + ".idx")));
    std::vector<HypergradState> out;
    std::size_t index, step, off, len;
    std::string mode;
    while (idx >> index >> mode >> step >> off >> len) {
        if (off + 2 * len > blob.size()) throw TruncatedFileError(stem + ".bin is shorter than its index");
        HypergradState s;
        s.sample_index = index;
        s.mode = mode == "exact" ? HypergradMode::exact : HypergradMode::approx;
        s.step = step;
        const auto base = blob.begin() + static_cast<std::ptrdiff_t>(off);
        s.nabla.assign(base, base + static_cast<std::ptrdiff_t>(len));
        s.mom_deriv.assign(base + static_cast<std::ptrdiff_t>(len), base + static_cast<std::ptrdiff_t>(2 * len));
        out.push_back(std::move(s));
    }
    return out;
}

/// error_trace.bin: five float64 per point (step, error, bound, eta, exact norm);
/// error_trace.txt: scalar metadata.
inline void save_error_trace(const fs::path& dir, const ApproxErrorTrace& trace) {
    fs::create_directories(dir);
    Vec blob;
    for (const auto& p : trace.points)
        blob.insert(blob.end(), {static_cast<double>(p.step), p.error_norm, p.bound, p.learning_rate, p.exact_norm});
    write_f64_blob(dir / "error_trace.bin", blob);
    std::ostringstream o;
    o << "sample_index = " << trace.sample_index << "\n"
      << "lipschitz = " << format_double(trace.lipschitz) << "\n"
      << "max_norm = " << format_double(trace.max_norm) << "\n"
      << "weight_decay = " << format_double(trace.weight_decay) << "\n"
      << "initial_lr = " << format_double(trace.initial_lr) << "\n"
      << "bound_holds = " << (trace.bound_holds() ? "true" : "false") << "\n"
      << "peak_error = " << format_double(trace.peak_error()) << "\n";
    write_text(dir / "error_trace.txt", o.str());
}

inline ApproxErrorTrace load_error_trace(const fs::path& dir) {
    const auto kv = parse_key_values(read_text(dir / "error_trace.txt"));
    ApproxErrorTrace t;
    t.sample_index = parse_uint(kv.at("sample_index"));
    t.lipschitz = parse_double(kv.at("lipschitz"));
    t.max_norm = parse_double(kv.at("max_norm"));
    t.weight_decay = parse_double(kv.at("weight_decay"));
    t.initial_lr = parse_double(kv.at("initial_lr"));
    const Vec blob = read_f64_blob(dir / "error_trace.bin");
    if (blob.size() % 5 != 0) throw TruncatedFileError("error_trace.bin is truncated");
    for (std::size_t k = 0; k < blob.size(); k += 5)
        t.points.push_back({static_cast<std::size_t>(blob[k]), blob[k + 1], blob[k + 2], blob[k + 3], blob[k + 4]});
    return t;
}

// ---------------------------------------------------------------------------
// Contribution CSV: method,train_index,test_index_or_ALL,contribution

inline std::string report_csv(const ContributionReport& rep) {
    std::ostringstream o;
    o << "method,train_index,test_index_or_ALL,contribution\n";
    for (const auto& e : rep.entries) {
        o << rep.method << "," << e.train_index << ",";
        if (e.test_index) o << *e.test_index;
        else o << "ALL";
        o << "," << format_double(e.value) << "\n";
    }
    return o.str();
}

inline void write_report_csv(const fs::path& path, const ContributionReport& rep) { write_text(path, report_csv(rep)); }

inline ContributionReport read_report_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || line != "method,train_index,test_index_or_ALL,contribution")
        throw FormatError(path.string() + ": missing contribution CSV header");
    ContributionReport rep;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 4) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
        if (rep.method.empty()) rep.method = f[0];
        else if (rep.method != f[0]) throw FormatError(path.string() + ": mixed methods in one report");
        ContributionEntry e;
        e.train_index = parse_uint(f[1]);
        if (f[2] == "ALL") e.test_index = std::nullopt;
        else e.test_index = parse_uint(f[2]);
        e.value = parse_double(f[3]);
        rep.entries.push_back(e);
    }
    return rep;
}

} // namespace hydra
