#include "forge/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "forge/params.hpp"

namespace forge {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Cuts an unquoted # comment; respects double-quoted spans.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' &&
            c != '-')
            return false;
    return true;
}

}  // namespace

void ConfigDoc::fail(int line, const std::string& what) const {
    std::ostringstream os;
    os << origin_;
    if (line > 0) os << ":" << line;
    os << ": " << what;
    throw ConfigError(os.str());
}

ConfigDoc ConfigDoc::parse_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in)
        throw ConfigError("cannot open config file " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), file.string());
}

ConfigDoc ConfigDoc::parse(const std::string& text, const std::string& origin) {
    ConfigDoc doc;
    doc.origin_ = origin;
    std::istringstream in(text);
    std::string raw, table;
    int ln = 0;
    while (std::getline(in, raw)) {
        ++ln;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                doc.fail(ln, "unterminated table header");
            table = trim(line.substr(1, line.size() - 2));
            if (!valid_key(table))
                doc.fail(ln, "bad table name \"" + table + "\"");
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            doc.fail(ln, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!valid_key(key)) doc.fail(ln, "bad key \"" + key + "\"");
        if (val.empty()) doc.fail(ln, "missing value for \"" + key + "\"");

        const std::string full = table.empty() ? key : table + "." + key;
        if (doc.vals_.count(full))
            doc.fail(ln, "duplicate key \"" + full + "\"");

        Value v;
        v.line = ln;
        if (val.front() == '"') {
            if (val.size() < 2 || val.back() != '"')
                doc.fail(ln, "unterminated string for \"" + full + "\"");
            v.kind = Value::Kind::text;
            v.str = val.substr(1, val.size() - 2);
            if (v.str.find('"') != std::string::npos)
                doc.fail(ln, "stray quote inside \"" + full + "\"");
        } else if (val == "true" || val == "false") {
            v.kind = Value::Kind::boolean;
            v.flag = (val == "true");
        } else if (val.front() == '[') {
            if (val.back() != ']')
                doc.fail(ln, "unterminated array for \"" + full + "\"");
            v.kind = Value::Kind::numbers;
            std::string body = trim(val.substr(1, val.size() - 2));
            while (!body.empty()) {
                const std::size_t comma = body.find(',');
                const std::string item = trim(body.substr(0, comma));
                if (item.empty())
                    doc.fail(ln, "empty element in \"" + full + "\"");
                char* end = nullptr;
                const double d = std::strtod(item.c_str(), &end);
                if (end != item.c_str() + item.size())
                    doc.fail(ln, "array element \"" + item + "\" in \"" +
                                     full + "\" is not a number");
                v.list.push_back(d);
                if (comma == std::string::npos) break;
                body = trim(body.substr(comma + 1));
                if (body.empty())
                    doc.fail(ln, "trailing comma in \"" + full + "\"");
            }
        } else {
            char* end = nullptr;
            v.num = std::strtod(val.c_str(), &end);
            if (end != val.c_str() + val.size())
                doc.fail(ln, "value \"" + val + "\" for \"" + full +
                                 "\" is not a number");
            v.kind = Value::Kind::number;
        }
        doc.vals_.emplace(full, std::move(v));
    }
    return doc;
}

bool ConfigDoc::has(const std::string& key) const {
    return vals_.count(key) != 0;
}

const ConfigDoc::Value* ConfigDoc::get(const std::string& key,
                                       Value::Kind want) const {
    const auto it = vals_.find(key);
    if (it == vals_.end()) return nullptr;
    seen_.insert(key);
    if (it->second.kind != want) {
        static const char* names[] = {"a number", "a string", "a boolean",
                                      "an array of numbers"};
        fail(it->second.line, "\"" + key + "\" must be " +
                                  names[static_cast<int>(want)]);
    }
    return &it->second;
}

double ConfigDoc::number(const std::string& key, double fallback) const {
    const Value* v = get(key, Value::Kind::number);
    return v ? v->num : fallback;
}

int ConfigDoc::integer(const std::string& key, int fallback) const {
    const Value* v = get(key, Value::Kind::number);
    if (!v) return fallback;
    const int i = static_cast<int>(v->num);
    if (static_cast<double>(i) != v->num)
        fail(v->line, "\"" + key + "\" must be an integer");
    return i;
}

bool ConfigDoc::boolean(const std::string& key, bool fallback) const {
    const Value* v = get(key, Value::Kind::boolean);
    return v ? v->flag : fallback;
}

std::string ConfigDoc::text(const std::string& key,
                            const std::string& fallback) const {
    const Value* v = get(key, Value::Kind::text);
    return v ? v->str : fallback;
}

std::vector<double> ConfigDoc::numbers(const std::string& key,
                                       std::vector<double> fallback) const {
    const auto it = vals_.find(key);
    if (it == vals_.end()) return fallback;
    seen_.insert(key);
    if (it->second.kind == Value::Kind::number) return {it->second.num};
    if (it->second.kind != Value::Kind::numbers)
        fail(it->second.line, "\"" + key + "\" must be an array of numbers");
    return it->second.list;
}

void ConfigDoc::reject_unknown() const {
    for (const auto& [key, val] : vals_)
        if (!seen_.count(key))
            fail(val.line, "unknown key \"" + key + "\"");
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
    return from_doc(ConfigDoc::parse_file(file));
}

ExperimentConfig ExperimentConfig::from_doc(const ConfigDoc& doc) {
    ExperimentConfig c;

    const int schema = doc.integer("schema_version", 1);
    if (schema != 1)
        throw ConfigError(doc.origin() + ": unsupported schema_version " +
                          std::to_string(schema));

    c.kind = doc.text("experiment.kind", c.kind);
    static const char* kinds[] = {"ansatz-verify", "solve", "pullback",
                                  "cone-test", "taylor-sample"};
    bool known = false;
    for (const char* k : kinds) known = known || c.kind == k;
    if (!known)
        throw ConfigError(doc.origin() + ": unknown experiment kind \"" +
                          c.kind + "\"");
    c.output = doc.text("experiment.output", c.output);
    c.seed = static_cast<std::uint64_t>(
        doc.number("experiment.seed", static_cast<double>(c.seed)));
    c.workers = doc.integer("experiment.workers", c.workers);
    if (c.workers < 1)
        throw ConfigError(doc.origin() + ": experiment.workers must be >= 1");

    c.dim = doc.integer("model.dim", c.dim);
    if (c.dim < 1 || c.dim > 4)
        throw ConfigError(doc.origin() + ": dim outside 1..4");
    c.p = doc.number("model.p", c.p);
    if (!(c.p > 1.0) || c.p > p_upper_limit(c.dim))
        throw ConfigError(doc.origin() + ": model.p outside (1, " +
                          std::to_string(p_upper_limit(c.dim)) + "] for dim " +
                          std::to_string(c.dim));
    c.k_override = doc.integer("model.k", 0);

    c.surface.kind = doc.text("surface.kind", c.surface.kind);
    c.surface.ell = doc.number("surface.ell", c.surface.ell);
    c.surface.a = doc.number("surface.a", c.surface.a);
    c.surface.bump_radius =
        doc.number("surface.bump_radius", c.surface.bump_radius);
    c.surface.file = doc.text("surface.file", c.surface.file);

    c.grid.nx = doc.integer("grid.nx", c.grid.nx);
    c.grid.extent = doc.number("grid.extent", c.grid.extent);
    c.grid.s_min = doc.number("grid.s_min", c.grid.s_min);
    c.grid.s_max = doc.number("grid.s_max", c.grid.s_max);
    c.grid.s_per_decade = doc.integer("grid.s_per_decade", c.grid.s_per_decade);

    const std::vector<double> ns =
        doc.numbers("solver.n", {static_cast<double>(c.n_list[0])});
    c.n_list.clear();
    for (double n : ns) {
        const int i = static_cast<int>(n);
        if (static_cast<double>(i) != n || i < 1)
            throw ConfigError(doc.origin() +
                              ": solver.n entries must be positive integers");
        c.n_list.push_back(i);
    }
    if (c.n_list.empty())
        throw ConfigError(doc.origin() + ": solver.n must not be empty");
    c.solver.Bn = doc.number("solver.B", c.solver.Bn);
    c.solver.cfl = doc.number("solver.cfl", c.solver.cfl);
    c.solver.ds = doc.number("solver.ds", c.solver.ds);
    c.solver.min_steps = doc.integer("solver.min_steps", c.solver.min_steps);
    c.solver.delta0_trial =
        doc.number("solver.delta0_trial", c.solver.delta0_trial);
    c.solver.s_end = doc.number("solver.s_end", c.solver.s_end);
    c.solver.omega = doc.number("solver.omega", c.solver.omega);
    c.solver.boundary_tol =
        doc.number("solver.boundary_tol", c.solver.boundary_tol);
    c.solver.nonlinear = doc.boolean("solver.nonlinear", c.solver.nonlinear);
    c.solver.checkpoints =
        doc.integer("solver.checkpoints", c.solver.checkpoints);

    c.tau0 = doc.number("pullback.tau0", c.tau0);
    c.sigmas = doc.numbers("pullback.sigmas", c.sigmas);
    c.x0 = doc.number("pullback.x0", c.x0);
    c.nt = doc.integer("pullback.nt", c.nt);
    c.nx_pullback = doc.integer("pullback.nx", c.nx_pullback);

    c.cone_sigma = doc.number("cone.sigma", c.cone_sigma);
    c.cone_sigma_prime = doc.number("cone.sigma_prime", c.cone_sigma_prime);
    c.cone_eta = doc.number("cone.eta", c.cone_eta);
    c.cone_samples = doc.integer("cone.samples", c.cone_samples);

    c.taylor_trials = static_cast<std::uint64_t>(doc.number(
        "taylor.trials", static_cast<double>(c.taylor_trials)));
    c.taylor_u[0] = doc.number("taylor.u_min", c.taylor_u[0]);
    c.taylor_u[1] = doc.number("taylor.u_max", c.taylor_u[1]);
    c.taylor_v[0] = doc.number("taylor.v_min", c.taylor_v[0]);
    c.taylor_v[1] = doc.number("taylor.v_max", c.taylor_v[1]);

    doc.reject_unknown();
    return c;
}

}  // namespace forge
