#include "forge/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "json.hpp"

namespace forge {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a64_hex(const void* data, std::size_t n) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(data, n));
    return buf;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_or_throw(const fs::path& file, const char* mode) {
    FilePtr f(std::fopen(file.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + file.string());
    return f;
}

std::string slurp(const fs::path& file) {
    FilePtr f = open_or_throw(file, "rb");
    std::fseek(f.get(), 0, SEEK_END);
    const long n = std::ftell(f.get());
    std::fseek(f.get(), 0, SEEK_SET);
    std::string out(static_cast<std::size_t>(n), '\0');
    if (n > 0 && std::fread(out.data(), 1, out.size(), f.get()) != out.size())
        throw IoError("short read on " + file.string());
    return out;
}

std::string file_hash(const fs::path& file) {
    const std::string bytes = slurp(file);
    return fnv1a64_hex(bytes.data(), bytes.size());
}

void write_text(const fs::path& file, const std::string& text) {
    FilePtr f = open_or_throw(file, "wb");
    if (std::fwrite(text.data(), 1, text.size(), f.get()) != text.size())
        throw IoError("short write on " + file.string());
}

json stack_config_json(const StackConfig& c) {
    return json{{"extent", c.extent},
                {"nx", c.nx},
                {"s_min", c.s_min},
                {"s_max", c.s_max},
                {"s_per_decade", c.s_per_decade}};
}

StackConfig stack_config_from(const json& j) {
    StackConfig c;
    c.extent = j.at("extent").get<double>();
    c.nx = j.at("nx").get<int>();
    c.s_min = j.at("s_min").get<double>();
    c.s_max = j.at("s_max").get<double>();
    c.s_per_decade = j.at("s_per_decade").get<int>();
    return c;
}

json surface_json(const SurfaceSpec& s) {
    return json{{"kind", s.kind},
                {"ell", s.ell},
                {"a", s.a},
                {"bump_radius", s.bump_radius},
                {"file", s.file}};
}

SurfaceSpec surface_from(const json& j) {
    SurfaceSpec s;
    s.kind = j.at("kind").get<std::string>();
    s.ell = j.at("ell").get<double>();
    s.a = j.at("a").get<double>();
    s.bump_radius = j.at("bump_radius").get<double>();
    s.file = j.at("file").get<std::string>();
    return s;
}

}  // namespace

void write_f64(const fs::path& file, std::span<const double> v) {
    FilePtr f = open_or_throw(file, "wb");
    std::vector<unsigned char> buf(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &v[i], 8);
        for (int b = 0; b < 8; ++b)
            buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    if (!buf.empty() &&
        std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw IoError("short write on " + file.string());
}

std::vector<double> read_f64(const fs::path& file) {
    const std::string bytes = slurp(file);
    if (bytes.size() % 8 != 0)
        throw IoError("length of " + file.string() + " is not a multiple of 8");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b)
            bits = (bits << 8) |
                   static_cast<unsigned char>(bytes[i * 8 + b]);
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

void write_csv(const fs::path& file, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    FilePtr f = open_or_throw(file, "wb");
    for (std::size_t i = 0; i < header.size(); ++i)
        std::fprintf(f.get(), "%s%s", header[i].c_str(),
                     i + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw IoError("row width does not match the header in " +
                          file.string());
        for (std::size_t i = 0; i < row.size(); ++i)
            std::fprintf(f.get(), "%.17g%s", row[i],
                         i + 1 < row.size() ? "," : "\n");
    }
}

void write_report_csv(const fs::path& file, const EnergyReport& rep,
                      int dim) {
    std::vector<std::string> header{"step", "s", "N", "E", "K0"};
    for (int d = 1; d <= dim; ++d) header.push_back("K" + std::to_string(d));
    header.insert(header.end(), {"K", "M", "coercivity_margin"});
    std::vector<std::vector<double>> rows;
    rows.reserve(rep.steps.size());
    for (const StepRecord& r : rep.steps) {
        std::vector<double> row{static_cast<double>(r.step), r.s, r.N, r.E,
                                r.K0};
        for (int d = 0; d < dim; ++d) row.push_back(r.Kl[d]);
        row.push_back(r.K);
        row.push_back(std::sqrt(std::max(0.0, r.M2)));
        row.push_back(r.coer);
        rows.push_back(std::move(row));
    }
    write_csv(file, header, rows);
}

Hypersurface make_surface(const SurfaceSpec& spec, int dim) {
    if (spec.kind == "zero") return Hypersurface::zero(dim);
    if (spec.kind == "linear") return Hypersurface::linear(dim, spec.ell);
    if (spec.kind == "quadratic")
        return Hypersurface::quadratic(dim, spec.ell, spec.a,
                                       spec.bump_radius);
    if (spec.kind == "tabulated") {
        if (dim != 1)
            throw IoError("tabulated surfaces are one-dimensional");
        return Hypersurface::tabulated(spec.file);
    }
    throw IoError("unknown surface kind \"" + spec.kind + "\"");
}

void save_stack(const fs::path& dir, const AnsatzStack& st,
                const SurfaceSpec& surf, const StackConfig& cfg) {
    fs::create_directories(dir);
    const ModelParams& mp = st.params();
    json man;
    man["schema_version"] = 1;
    man["kind"] = "ansatz-stack";
    man["model"] = {{"dim", mp.dim}, {"p", mp.p}, {"k", mp.k}};
    man["surface"] = surface_json(surf);
    man["stack_config"] = stack_config_json(cfg);
    man["saxis_size"] = st.saxis().s.size();
    man["grid_nx"] = st.grid().n[0];

    json files = json::object();
    auto emit = [&](const std::string& name, std::span<const double> v) {
        write_f64(dir / name, v);
        files[name] = file_hash(dir / name);
    };
    emit("E0.f64", st.E0());

    json levels = json::array();
    for (std::size_t j = 0; j < st.levels().size(); ++j) {
        const LevelData& lv = st.levels()[j];
        const std::string tag = "level" + std::to_string(j + 1);
        emit(tag + "_v.f64", lv.v);
        emit(tag + "_vs.f64", lv.vs);
        emit(tag + "_E.f64", lv.E);
        levels.push_back({{"r", lv.r},
                          {"s_top", lv.s_top},
                          {"valid_top", lv.valid_top}});
    }
    man["levels"] = levels;
    man["files"] = files;
    write_text(dir / "manifest.json", man.dump(2) + "\n");
}

LoadedStack load_stack(const fs::path& dir) {
    const json man = json::parse(slurp(dir / "manifest.json"));
    if (man.at("schema_version").get<int>() != 1)
        throw IoError("unsupported stack schema version");
    if (man.at("kind").get<std::string>() != "ansatz-stack")
        throw IoError("directory does not hold an ansatz stack");

    LoadedStack out;
    out.mp = derive_params(man["model"].at("dim").get<int>(),
                           man["model"].at("p").get<double>(),
                           man["model"].at("k").get<int>());
    out.surface = surface_from(man.at("surface"));
    out.cfg = stack_config_from(man.at("stack_config"));
    out.bundle = std::make_unique<SurfaceBundle>(
        localize(make_surface(out.surface, out.mp.dim), out.mp));
    build_psi(*out.bundle);
    out.stack =
        std::make_unique<AnsatzStack>(out.mp, out.bundle.get(), out.cfg);

    if (out.stack->saxis().s.size() != man.at("saxis_size").get<std::size_t>() ||
        out.stack->grid().n[0] != man.at("grid_nx").get<int>())
        throw IoError("rebuilt stack geometry disagrees with the manifest");

    const std::size_t cells =
        out.stack->saxis().s.size() * out.stack->grid().size();
    std::size_t j = 0;
    for (const json& lj : man.at("levels")) {
        const std::string tag = "level" + std::to_string(++j);
        LevelData lv;
        lv.r = lj.at("r").get<double>();
        lv.s_top = lj.at("s_top").get<std::size_t>();
        lv.valid_top = lj.at("valid_top").get<std::size_t>();
        lv.v = read_f64(dir / (tag + "_v.f64"));
        lv.vs = read_f64(dir / (tag + "_vs.f64"));
        lv.E = read_f64(dir / (tag + "_E.f64"));
        if (lv.v.size() != cells || lv.vs.size() != cells ||
            lv.E.size() != cells)
            throw IoError(tag + " arrays have the wrong shape");
        out.stack->restore_level(std::move(lv));
    }
    return out;
}

void save_trajectory(const fs::path& dir, const Trajectory& tr) {
    fs::create_directories(dir);
    json man;
    man["schema_version"] = 1;
    man["kind"] = "trajectory";
    man["grid"] = {{"dim", tr.grid.dim},
                   {"n", tr.grid.n[0]},
                   {"x0", tr.grid.x0[0]},
                   {"h", tr.grid.h}};
    json files = json::object();
    json states = json::array();
    std::vector<double> svals;
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
        const std::string tag = "state" + std::to_string(i);
        write_f64(dir / (tag + "_v.f64"), tr.states[i].v);
        write_f64(dir / (tag + "_vs.f64"), tr.states[i].vs);
        files[tag + "_v.f64"] = file_hash(dir / (tag + "_v.f64"));
        files[tag + "_vs.f64"] = file_hash(dir / (tag + "_vs.f64"));
        svals.push_back(tr.states[i].s);
    }
    write_f64(dir / "s.f64", svals);
    files["s.f64"] = file_hash(dir / "s.f64");
    man["states"] = tr.states.size();
    man["files"] = files;
    write_text(dir / "manifest.json", man.dump(2) + "\n");
}

Trajectory load_trajectory(const fs::path& dir) {
    const json man = json::parse(slurp(dir / "manifest.json"));
    if (man.at("kind").get<std::string>() != "trajectory")
        throw IoError("directory does not hold a trajectory");
    Trajectory tr;
    tr.grid.dim = man["grid"].at("dim").get<int>();
    for (int d = 0; d < tr.grid.dim; ++d)
        tr.grid.n[d] = man["grid"].at("n").get<int>();
    tr.grid.x0.fill(0.0);
    for (int d = 0; d < tr.grid.dim; ++d)
        tr.grid.x0[d] = man["grid"].at("x0").get<double>();
    tr.grid.h = man["grid"].at("h").get<double>();
    const std::vector<double> svals = read_f64(dir / "s.f64");
    const std::size_t n = man.at("states").get<std::size_t>();
    if (svals.size() != n)
        throw IoError("state count disagrees with the time axis");
    for (std::size_t i = 0; i < n; ++i) {
        WaveState w;
        w.s = svals[i];
        w.v = read_f64(dir / ("state" + std::to_string(i) + "_v.f64"));
        w.vs = read_f64(dir / ("state" + std::to_string(i) + "_vs.f64"));
        if (w.v.size() != tr.grid.size() || w.vs.size() != tr.grid.size())
            throw IoError("state arrays have the wrong shape");
        tr.states.push_back(std::move(w));
    }
    return tr;
}

VerifyReport verify_manifest_dir(const fs::path& dir) {
    VerifyReport rep;
    const fs::path mf = dir / "manifest.json";
    if (!fs::exists(mf)) {
        rep.ok = false;
        rep.messages.push_back("missing manifest.json in " + dir.string());
        return rep;
    }
    json man;
    try {
        man = json::parse(slurp(mf));
    } catch (const std::exception& e) {
        rep.ok = false;
        rep.messages.push_back(std::string("unreadable manifest: ") +
                               e.what());
        return rep;
    }
    if (!man.contains("files")) {
        rep.messages.push_back("manifest lists no files");
        return rep;
    }
    for (const auto& [name, want] : man["files"].items()) {
        const fs::path file = dir / name;
        if (!fs::exists(file)) {
            rep.ok = false;
            rep.messages.push_back("missing " + name);
            continue;
        }
        const std::string got = file_hash(file);
        if (got != want.get<std::string>()) {
            rep.ok = false;
            rep.messages.push_back("checksum mismatch on " + name +
                                   " (recorded " + want.get<std::string>() +
                                   ", found " + got + ")");
        }
    }
    return rep;
}

}  // namespace forge
