#include <cstring>

#include "ensmooth/error.hpp"
#include "ensmooth/io.hpp"
#include "ensmooth/neural.hpp"

namespace ensmooth::neural {

using nlohmann::json;

namespace {

void append(std::vector<double>& out, const Eigen::VectorXd& v) {
  out.insert(out.end(), v.data(), v.data() + v.size());
}

}  // namespace

void save_network(const Network& net, const Scaler& scaler,
                  const std::filesystem::path& base) {
  const NetworkSpec& s = net.spec();
  json spec = {{"input_dim", s.input_dim},
               {"output_dim", s.output_dim},
               {"batchnorm", s.batchnorm},
               {"output_activation",
                s.output_activation == OutputActivation::tanh ? "tanh" : "linear"}};
  json blocks = json::array();
  for (const BlockSpec& b : s.blocks)
    blocks.push_back({{"kind", b.kind == BlockKind::reducing ? "reducing" : "preserving"},
                      {"width", b.width}});
  spec["blocks"] = blocks;
  json layers = json::array();
  for (const ParamSlot& p : net.slots())
    layers.push_back({{"name", p.name}, {"rows", p.rows}, {"cols", p.cols}, {"offset", p.offset}});

  std::vector<double> payload;
  append(payload, net.parameters());
  append(payload, net.running_stats());
  for (const Eigen::VectorXd* v :
       {&scaler.in_mean, &scaler.in_std, &scaler.out_mean, &scaler.out_std})
    append(payload, *v);

  json extra = {{"spec", spec},
                {"layers", layers},
                {"sections",
                 {{"parameters", net.parameters().size()},
                  {"running_stats", net.running_stats().size()},
                  {"scaler_inputs", scaler.in_mean.size()},
                  {"scaler_outputs", scaler.out_mean.size()}}}};
  io::write_artifact(base, "network",
                     {{"rows", static_cast<long long>(payload.size())}, {"cols", 1}}, 0,
                     payload, extra);
}

std::pair<Network, Scaler> load_network(const std::filesystem::path& base) {
  io::Artifact a = io::read_artifact(base, "network");
  try {
    const json& js = a.manifest.at("spec");
    NetworkSpec spec;
    spec.input_dim = js.at("input_dim").get<int>();
    spec.output_dim = js.at("output_dim").get<int>();
    spec.batchnorm = js.at("batchnorm").get<bool>();
    spec.output_activation = js.at("output_activation").get<std::string>() == "tanh"
                                 ? OutputActivation::tanh
                                 : OutputActivation::linear;
    for (const json& b : js.at("blocks"))
      spec.blocks.push_back({b.at("kind").get<std::string>() == "reducing"
                                 ? BlockKind::reducing
                                 : BlockKind::preserving,
                             b.at("width").get<int>()});
    Network net(spec);
    Scaler scaler;
    const json& sec = a.manifest.at("sections");
    const auto np = sec.at("parameters").get<Eigen::Index>();
    const auto nr = sec.at("running_stats").get<Eigen::Index>();
    const auto ni = sec.at("scaler_inputs").get<Eigen::Index>();
    const auto no = sec.at("scaler_outputs").get<Eigen::Index>();
    if (np != net.parameters().size() || nr != net.running_stats().size() ||
        ni != spec.input_dim || no != spec.output_dim ||
        static_cast<std::size_t>(np + nr + 2 * ni + 2 * no) != a.payload.size())
      throw DimensionMismatch("network payload sections disagree with the spec");
    const double* p = a.payload.data();
    auto take = [&p](Eigen::Index count) {
      Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(p, count);
      p += count;
      return v;
    };
    net.parameters() = take(np);
    net.running_stats() = take(nr);
    scaler.in_mean = take(ni);
    scaler.in_std = take(ni);
    scaler.out_mean = take(no);
    scaler.out_std = take(no);
    return {std::move(net), std::move(scaler)};
  } catch (const json::exception& e) {
    throw MalformedManifest(std::string("bad network manifest: ") + e.what());
  }
}

}  // namespace ensmooth::neural
