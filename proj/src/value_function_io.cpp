#include <filesystem>

#include "ecodrive/binary_io.hpp"
#include "ecodrive/value_function.hpp"

namespace ecodrive {

namespace {

constexpr std::string_view kMagic = "EDVF";
constexpr std::string_view kClassMagic = "EDVC";

std::vector<double> get_axis(BinaryReader& r, std::uint32_t n) {
  std::vector<double> nodes(n);
  r.get_span(std::span<double>(nodes));
  return nodes;
}

ValueFunctionHeader read_header(BinaryReader& r) {
  r.expect_magic(kMagic);
  ValueFunctionHeader h;
  h.version = r.get<std::uint32_t>();
  if (h.version != kValueFunctionVersion) {
    throw FormatError("'" + r.path() + "' has unsupported EDVF version " + std::to_string(h.version));
  }
  h.total_bytes = r.get<std::uint64_t>();
  if (h.total_bytes != r.size()) throw FormatError("'" + r.path() + "' size field does not match the file");
  h.route_id = r.get<std::uint64_t>();
  h.gamma = r.get<double>();
  h.num_nodes = r.get<std::uint32_t>();
  const auto nv = r.get<std::uint32_t>();
  const auto nxi = r.get<std::uint32_t>();
  const auto nt = r.get<std::uint32_t>();
  h.v_nodes = get_axis(r, nv);
  h.xi_nodes = get_axis(r, nxi);
  h.t_nodes = get_axis(r, nt);
  const std::uint64_t tensor = std::uint64_t{h.num_nodes} * nv * nxi * nt * sizeof(float);
  if (r.remaining() != tensor) throw FormatError("'" + r.path() + "' cost tensor size does not match its axes");
  return h;
}

}  // namespace

std::string class_sidecar_path(const std::string& path) { return path + ".cls"; }

void save_value_function(const ValueFunction& vf, const std::string& path) {
  const auto& g = vf.grid();
  const std::uint64_t total = kMagic.size() + sizeof(std::uint32_t) + sizeof(std::uint64_t) * 2 + sizeof(double) +
                              sizeof(std::uint32_t) * 4 + sizeof(double) * (g.v.size() + g.xi.size() + g.t.size()) +
                              vf.all_costs().size_bytes() + sizeof(std::uint64_t);
  BinaryWriter w(path);
  w.put_bytes(kMagic);
  w.put(kValueFunctionVersion);
  w.put(total);
  w.put(vf.route_id());
  w.put(vf.gamma());
  w.put(static_cast<std::uint32_t>(vf.num_nodes()));
  w.put(static_cast<std::uint32_t>(g.v.size()));
  w.put(static_cast<std::uint32_t>(g.xi.size()));
  w.put(static_cast<std::uint32_t>(g.t.size()));
  w.put_span(g.v.nodes());
  w.put_span(g.xi.nodes());
  w.put_span(g.t.nodes());
  w.put_span(vf.all_costs());
  w.finish();

  BinaryWriter c(class_sidecar_path(path));
  c.put_bytes(kClassMagic);
  c.put(kValueFunctionVersion);
  c.put(vf.route_id());
  c.put(static_cast<std::uint64_t>(vf.all_classes().size()));
  c.put_span(vf.all_classes());
  c.finish();
}

ValueFunctionHeader read_value_function_header(const std::string& path) {
  BinaryReader r(path);
  ValueFunctionHeader h = read_header(r);
  r.skip_to_checksum();
  r.verify_checksum();
  return h;
}

ValueFunction load_value_function(const std::string& path) {
  BinaryReader r(path);
  ValueFunctionHeader h = read_header(r);
  GridSpec grid;
  grid.v = Axis(std::move(h.v_nodes));
  grid.xi = Axis(std::move(h.xi_nodes));
  grid.t = Axis(std::move(h.t_nodes));
  ValueFunction vf(std::move(grid), h.num_nodes, h.route_id, h.gamma);
  auto costs = vf.all_costs();
  r.get_span(costs);
  r.verify_checksum();

  auto classes = vf.all_classes();
  const std::string cls_path = class_sidecar_path(path);
  if (std::filesystem::exists(cls_path)) {
    BinaryReader c(cls_path);
    c.expect_magic(kClassMagic);
    if (c.get<std::uint32_t>() != kValueFunctionVersion) throw FormatError("'" + cls_path + "' version mismatch");
    if (c.get<std::uint64_t>() != h.route_id) throw FormatError("'" + cls_path + "' belongs to another route");
    if (c.get<std::uint64_t>() != classes.size()) throw FormatError("'" + cls_path + "' cell count mismatch");
    c.get_span(classes);
    c.verify_checksum();
  } else {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      classes[i] = static_cast<std::uint8_t>(costs[i] >= static_cast<float>(kBig) ? CellClass::Bounds
                                                                                  : CellClass::Feasible);
    }
  }
  return vf;
}

}  // namespace ecodrive
