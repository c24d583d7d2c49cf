#include "pgr2m/io/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "pgr2m/error.hpp"

namespace pgr2m::io {

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'G', 'R', '2', 'M', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

}  // namespace

const nn::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

nlohmann::json Checkpoint::header() const {
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    index.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}});
    offset += t.value.numel();
  }
  nlohmann::json h = {{"format", kCheckpointFormat},
                      {"version", kCheckpointVersion},
                      {"component", component},
                      {"config", config.to_json()},
                      {"catalog_version", catalog_version},
                      {"catalog", catalog},
                      {"step", step},
                      {"metrics", metrics},
                      {"tensors", index}};
  if (optimizer_step >= 0) h["optimizer"] = {{"step", optimizer_step}};
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const std::string header = ckpt.header().dump();
    out.write(kMagic.data(), kMagic.size());
    write_u32(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::vector<float> buf;
    for (const auto& t : ckpt.tensors) {
      buf.assign(t.value.values().begin(), t.value.values().end());
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ParseError(path.string() + ": not a pgr2m checkpoint");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw ParseError(path.string() + ": truncated checkpoint header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": checkpoint header: " + e.what());
  }
  Checkpoint c;
  try {
    if (h.at("format").get<std::string>() != kCheckpointFormat) throw ParseError(path.string() + ": unknown format");
    if (h.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError(path.string() + ": unsupported checkpoint version " + h.at("version").dump());
    }
    c.component = h.at("component").get<std::string>();
    c.config = Config::from_json(h.at("config"));
    c.catalog_version = h.at("catalog_version").get<std::string>();
    c.catalog = h.at("catalog");
    c.step = h.at("step").get<std::uint64_t>();
    c.metrics = h.value("metrics", nlohmann::json::object());
    if (h.contains("optimizer")) c.optimizer_step = h.at("optimizer").at("step").get<std::int64_t>();
    std::size_t expected_offset = 0;
    std::vector<float> buf;
    for (const auto& e : h.at("tensors")) {
      NamedTensor t;
      t.name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<nn::Shape>();
      if (e.at("offset").get<std::size_t>() != expected_offset) {
        throw ParseError(path.string() + ": tensor '" + t.name + "' has an inconsistent offset");
      }
      t.value = nn::Tensor(shape);
      buf.resize(t.value.numel());
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!in) throw ParseError(path.string() + ": truncated tensor data for '" + t.name + "'");
      std::copy(buf.begin(), buf.end(), t.value.values().begin());
      expected_offset += t.value.numel();
      c.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": checkpoint header: " + e.what());
  }
  return c;
}

void store_params(Checkpoint& ckpt, const nn::ParamStore& params, const nn::AdamState* optimizer) {
  for (const auto& p : params.items()) ckpt.tensors.push_back({p.name, p.value});
  if (optimizer == nullptr || optimizer->m.empty()) return;
  std::size_t i = 0;
  for (const auto& p : params.items()) {
    ckpt.tensors.push_back({"adam.m/" + p.name, optimizer->m.at(i)});
    ckpt.tensors.push_back({"adam.v/" + p.name, optimizer->v.at(i)});
    ++i;
  }
  ckpt.optimizer_step = optimizer->step;
}

void restore_params(const Checkpoint& ckpt, nn::ParamStore& params) {
  for (auto* p : params.all()) {
    const nn::Tensor* t = ckpt.find(p->name);
    if (t == nullptr) throw ValidationError(ckpt.component + " checkpoint lacks parameter '" + p->name + "'");
    if (t->shape() != p->value.shape()) {
      throw DimensionError(ckpt.component + " checkpoint parameter '" + p->name + "' has a different shape");
    }
    p->value = *t;
    p->zero_grad();
  }
}

std::optional<nn::AdamState> restore_optimizer(const Checkpoint& ckpt, const nn::ParamStore& params) {
  if (ckpt.optimizer_step < 0) return std::nullopt;
  nn::AdamState s;
  s.step = ckpt.optimizer_step;
  for (const auto& p : params.items()) {
    const nn::Tensor* m = ckpt.find("adam.m/" + p.name);
    const nn::Tensor* v = ckpt.find("adam.v/" + p.name);
    if (m == nullptr || v == nullptr) throw ValidationError("optimizer state lacks '" + p.name + "'");
    s.m.push_back(*m);
    s.v.push_back(*v);
  }
  return s;
}

void require_component(const Checkpoint& ckpt, std::string_view component, const std::filesystem::path& path) {
  if (ckpt.component != component) {
    throw ValidationError(path.string() + " holds a '" + ckpt.component + "' checkpoint, expected '" +
                          std::string(component) + "'");
  }
}

}  // namespace pgr2m::io
