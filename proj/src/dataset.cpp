#include "eventsr/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>

#include "eventsr/error.hpp"
#include "eventsr/io.hpp"

namespace eventsr::data
{

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

constexpr std::pair<Role, const char *> kRoleNames[] = {
  {Role::EsimData, "ESIM-data"}, {Role::EsimRW, "ESIM-RW"}, {Role::EsimSR1, "ESIM-SR1"},
  {Role::EsimSR2, "ESIM-SR2"},   {Role::EvRW, "Ev-RW"},     {Role::SRRW, "SR-RW"},
};

bool has_events(Role r) { return r != Role::SRRW; }
bool is_sr(Role r) { return r == Role::EsimSR2 || r == Role::SRRW; }

std::string frame_name(const char * prefix, std::size_t source, std::size_t k)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/%03zu_%05zu.png", prefix, source, k);
  return buf;
}

}  // namespace

std::string role_name(Role r)
{
  for (const auto & [role, name] : kRoleNames)
    if (role == r) return name;
  return "?";
}

Role parse_role(const std::string & name)
{
  for (const auto & [role, n] : kRoleNames)
    if (name == n) return role;
  throw UsageError("unknown dataset role '" + name + "'");
}

Usage role_usage(Role r)
{
  // Columns P1, P2, P3, Eval, Gen.
  switch (r) {
    case Role::EsimData: return {true, true, true, true, false};
    case Role::EsimRW: return {true, true, true, false, true};
    case Role::EsimSR1: return {true, true, true, false, true};
    case Role::EsimSR2: return {true, true, true, true, false};
    case Role::EvRW: return {false, true, false, true, true};
    case Role::SRRW: return {false, true, true, false, true};
  }
  return {};
}

std::vector<std::string> required_kinds(Role r)
{
  switch (r) {
    case Role::EsimSR2: return {"events", "hr", "lr"};
    case Role::SRRW: return {"hr", "lr"};
    default: return {"events", "aps"};
  }
}

std::vector<const Asset *> DatasetManifest::of_kind(const std::string & kind) const
{
  std::vector<const Asset *> out;
  for (const auto & a : assets)
    if (a.kind == kind) out.push_back(&a);
  return out;
}

fs::path DatasetManifest::resolve(const Asset & a) const
{
  const fs::path p(a.path);
  return p.is_absolute() ? p : dir / p;
}

void DatasetManifest::validate() const
{
  for (const auto & kind : required_kinds(role))
    if (of_kind(kind).empty())
      throw DataError("manifest for role " + role_name(role) + " lacks required '" + kind + "' assets");
}

void save_manifest(const fs::path & path, DatasetManifest & m)
{
  json j;
  j["role"] = role_name(m.role);
  j["width"] = m.width;
  j["height"] = m.height;
  j["scale"] = m.scale;
  j["usage"] = {{"p1", m.usage.p1}, {"p2", m.usage.p2}, {"p3", m.usage.p3}, {"eval", m.usage.eval},
                {"gen", m.usage.generalization}};
  j["assets"] = json::array();
  for (const auto & a : m.assets) {
    json ja{{"kind", a.kind}, {"path", a.path}, {"source", a.source}};
    if (a.t_us) ja["t_us"] = *a.t_us;
    j["assets"].push_back(ja);
  }
  io::write_text_atomic(path, j.dump(2) + "\n");
  m.dir = path.parent_path();
}

DatasetManifest load_manifest(const fs::path & path)
{
  const auto bytes = io::read_file(path);
  DatasetManifest m;
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    m.role = parse_role(j.at("role").get<std::string>());
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.scale = j.at("scale").get<int>();
    m.usage = role_usage(m.role);
    for (const auto & ja : j.at("assets")) {
      Asset a;
      a.kind = ja.at("kind").get<std::string>();
      a.path = ja.at("path").get<std::string>();
      a.source = ja.value("source", 0);
      if (ja.contains("t_us")) a.t_us = ja.at("t_us").get<std::int64_t>();
      m.assets.push_back(std::move(a));
    }
  } catch (const json::exception & e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  m.dir = path.parent_path();
  return m;
}

DatasetManifest build_dataset(const std::vector<sim::VideoSequence> & sources, Role role,
                              const DatasetOptions & opts, const fs::path & out_dir)
{
  if (sources.empty()) throw DataError("build_dataset: no sources");
  for (const auto & v : sources) v.validate();
  const int hr_h = sources.front().height();
  const int hr_w = sources.front().width();
  for (const auto & v : sources)
    if (v.height() != hr_h || v.width() != hr_w) throw DataError("build_dataset: sources differ in size");
  if (is_sr(role) && (hr_h % opts.scale != 0 || hr_w % opts.scale != 0))
    throw DataError("role " + role_name(role) + " needs source dims divisible by scale " +
                    std::to_string(opts.scale));

  fs::create_directories(out_dir);
  DatasetManifest m;
  m.role = role;
  m.usage = role_usage(role);
  m.scale = is_sr(role) ? opts.scale : 1;
  m.width = is_sr(role) ? hr_w / opts.scale : hr_w;
  m.height = is_sr(role) ? hr_h / opts.scale : hr_h;

  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto & video = sources[s];
    const int src = static_cast<int>(s);
    sim::VideoSequence lr = video;
    if (is_sr(role)) {
      for (std::size_t k = 0; k < video.frames.size(); ++k) {
        lr.frames[k] = sim::downsample_bicubic(video.frames[k], opts.scale);
        const std::string hr_path = frame_name("hr", s, k);
        const std::string lr_path = frame_name("lr", s, k);
        io::write_png(out_dir / hr_path, video.frames[k]);
        io::write_png(out_dir / lr_path, lr.frames[k]);
        m.assets.push_back({"hr", hr_path, video.timestamps[k], src});
        m.assets.push_back({"lr", lr_path, video.timestamps[k], src});
      }
    } else {
      for (std::size_t k = 0; k < video.frames.size(); ++k) {
        Tensor aps = video.frames[k];
        if (role == Role::EvRW)
          aps = sim::degrade_aps(aps, opts.aps_blur_sigma, opts.aps_noise_sigma, opts.sim.seed * 1000003ull + s * 4099ull + k);
        const std::string path = frame_name("aps", s, k);
        io::write_png(out_dir / path, aps);
        m.assets.push_back({"aps", path, video.timestamps[k], src});
      }
    }
    if (has_events(role)) {
      sim::SimConfig sc = opts.sim;
      sc.seed = opts.sim.seed + s;
      const EventStream events = sim::simulate_events(lr, sc);
      char name[32];
      std::snprintf(name, sizeof(name), "events_%03zu.evt1", s);
      io::write_evt1(out_dir / name, events);
      m.assets.push_back({"events", name, std::nullopt, src});
      if (opts.write_csv) {
        std::snprintf(name, sizeof(name), "events_%03zu.csv", s);
        io::write_events_csv(out_dir / name, events);
      }
    }
  }
  m.validate();
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace eventsr::data
