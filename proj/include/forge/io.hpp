#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "forge/ansatz.hpp"
#include "forge/solver.hpp"

namespace forge {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string fnv1a64_hex(const void* data, std::size_t n);
inline std::string fnv1a64_hex(const std::string& s) {
    return fnv1a64_hex(s.data(), s.size());
}

// Flat binary arrays, 64-bit floats, little-endian regardless of host.
void write_f64(const std::filesystem::path& file, std::span<const double> v);
std::vector<double> read_f64(const std::filesystem::path& file);

// One header row, then %.17g cells: rereading reproduces every bit.
void write_csv(const std::filesystem::path& file,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

// Columns step,s,N,E,K0..K<dim>,K,M,coercivity_margin.
void write_report_csv(const std::filesystem::path& file,
                      const EnergyReport& rep, int dim);

// Declarative surface description as it appears in configs.
struct SurfaceSpec {
    std::string kind = "zero";  // zero | linear | quadratic | tabulated
    double ell = 0.0;
    double a = 0.0;
    double bump_radius = 1.0;
    std::string file;  // tabulated only
};

Hypersurface make_surface(const SurfaceSpec& spec, int dim);

// A stack directory holds the manifest plus one array file per field;
// the manifest records params, surface, config, level table and checksums.
void save_stack(const std::filesystem::path& dir, const AnsatzStack& st,
                const SurfaceSpec& surf, const StackConfig& cfg);

struct LoadedStack {
    ModelParams mp;
    SurfaceSpec surface;
    StackConfig cfg;
    std::unique_ptr<SurfaceBundle> bundle;
    std::unique_ptr<AnsatzStack> stack;
};

LoadedStack load_stack(const std::filesystem::path& dir);

// Checkpoint trajectories share the stack's binary+manifest format.
void save_trajectory(const std::filesystem::path& dir, const Trajectory& tr);
Trajectory load_trajectory(const std::filesystem::path& dir);

// Re-hashes every file recorded by the manifest under dir.
struct VerifyReport {
    bool ok = true;
    std::vector<std::string> messages;
};
VerifyReport verify_manifest_dir(const std::filesystem::path& dir);

}  // namespace forge
