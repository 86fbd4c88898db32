#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "forge/ansatz.hpp"
#include "forge/io.hpp"
#include "forge/solver.hpp"

namespace forge {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Minimal declarative config reader: [tables], key = value lines, numbers,
// quoted strings, booleans and flat arrays; # starts a comment. Keys are
// addressed table.key. Strict by design: anything it does not understand is
// an error, and reject_unknown() turns unread keys into errors too.
class ConfigDoc {
public:
    static ConfigDoc parse_file(const std::filesystem::path& file);
    static ConfigDoc parse(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const;

    double number(const std::string& key, double fallback) const;
    int integer(const std::string& key, int fallback) const;
    bool boolean(const std::string& key, bool fallback) const;
    std::string text(const std::string& key, const std::string& fallback) const;
    // A scalar number is accepted as a one-element list.
    std::vector<double> numbers(const std::string& key,
                                std::vector<double> fallback) const;

    // Throws on the first key no getter ever asked for, naming it.
    void reject_unknown() const;

    const std::string& origin() const { return origin_; }

private:
    struct Value {
        enum class Kind { number, text, boolean, numbers } kind = Kind::number;
        double num = 0.0;
        bool flag = false;
        std::string str;
        std::vector<double> list;
        int line = 0;
    };
    const Value* get(const std::string& key, Value::Kind want) const;
    [[noreturn]] void fail(int line, const std::string& what) const;

    std::string origin_ = "<config>";
    std::map<std::string, Value> vals_;
    mutable std::set<std::string> seen_;
};

// One config describes one experiment; solver.n may list several starting
// indices, which fan out into that many runs sharing everything else.
struct ExperimentConfig {
    std::string kind = "solve";  // ansatz-verify | solve | pullback |
                                 // cone-test | taylor-sample
    std::string output = "out";
    std::uint64_t seed = 1;
    int workers = 1;

    int dim = 1;
    double p = 3.0;
    int k_override = 0;  // 0 -> derived minimum

    SurfaceSpec surface;
    StackConfig grid;

    std::vector<int> n_list{100};
    SolverConfig solver;  // template; n is filled in per run

    double tau0 = 0.0;  // 0 -> the influence-region value for delta0_trial
    std::vector<double> sigmas{0.5, 0.9};
    double x0 = 0.0;
    int nt = 512;
    int nx_pullback = 0;  // 0 -> reuse the solver grid

    double cone_sigma = 1.0;
    double cone_sigma_prime = 0.9;
    double cone_eta = 0.1;
    int cone_samples = 20000;

    std::uint64_t taylor_trials = 100000;
    std::array<double, 2> taylor_u{0.1, 10.0};
    std::array<double, 2> taylor_v{-5.0, 5.0};

    static ExperimentConfig load(const std::filesystem::path& file);
    static ExperimentConfig from_doc(const ConfigDoc& doc);
};

}  // namespace forge
