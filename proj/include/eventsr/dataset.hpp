#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eventsr/event_sim.hpp"

namespace eventsr::data
{

/// Dataset roles; each fixes which assets are produced and which training
/// phases / evaluation consume them.
enum class Role { EsimData, EsimRW, EsimSR1, EsimSR2, EvRW, SRRW };

std::string role_name(Role r);
Role parse_role(const std::string & name);

struct Usage
{
  bool p1 = false;
  bool p2 = false;
  bool p3 = false;
  bool eval = false;
  bool generalization = false;

  bool phase(int k) const { return k == 1 ? p1 : k == 2 ? p2 : p3; }
};

Usage role_usage(Role r);

/// Asset kinds: "events" (EVT1), "aps" (LR intensity frame), "hr" / "lr"
/// (super-resolution pair), "clean_aps" (denoised APS target).
struct Asset
{
  std::string kind;
  std::string path;  // relative to the manifest directory unless absolute
  std::optional<std::int64_t> t_us;
  int source = 0;
};

struct DatasetManifest
{
  Role role = Role::EsimRW;
  int width = 0;   // event / LR resolution
  int height = 0;
  int scale = 1;
  Usage usage;
  std::vector<Asset> assets;
  std::filesystem::path dir;  // set on load/save, not serialized

  std::vector<const Asset *> of_kind(const std::string & kind) const;
  std::filesystem::path resolve(const Asset & a) const;
  /// Throws DataError if a kind the role requires is absent.
  void validate() const;
};

std::vector<std::string> required_kinds(Role r);

void save_manifest(const std::filesystem::path & path, DatasetManifest & m);
DatasetManifest load_manifest(const std::filesystem::path & path);

struct DatasetOptions
{
  sim::SimConfig sim;
  int scale = 4;
  double aps_blur_sigma = 0.8;
  double aps_noise_sigma = 0.03;
  bool write_csv = false;
};

/// Simulates events and writes the role's assets plus manifest.json into out_dir.
DatasetManifest build_dataset(const std::vector<sim::VideoSequence> & sources, Role role,
                              const DatasetOptions & opts, const std::filesystem::path & out_dir);

}  // namespace eventsr::data
