// Writes demo networks, input batches and a run config in the engine's
// manifest format.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "fixtures.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  using namespace memse;
  CLI::App app{"memse_fixture: write demo networks and inputs"};
  std::string arch = "small", out = "fixture";
  std::size_t inputs = 64;
  std::uint64_t seed = 1;
  double sigma_v = 0.01;
  app.add_option("arch", arch, "small|large|toy")->check(CLI::IsMember({"small", "large", "toy"}));
  app.add_option("--out", out, "output directory");
  app.add_option("--inputs", inputs, "input batch size");
  app.add_option("--seed", seed, "weight/input seed");
  app.add_option("--sigma", sigma_v, "sigma_v written into the config");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path dir = out;
    fs::create_directories(dir);
    NetworkSpec spec;
    InputBatch batch;
    if (arch == "toy") {
      auto t = fixtures::toy_classifier(8, 4, inputs, 0.5, seed);
      spec = std::move(t.spec);
      batch = std::move(t.data);
    } else {
      spec = arch == "small" ? fixtures::paper_small(seed) : fixtures::paper_large(seed);
      batch = fixtures::random_inputs(spec.input_shape, inputs, derive_seed(seed, {1}), 10);
    }
    write_network(spec, dir / "network.json");
    write_inputs(batch, dir / "inputs.json");
    const nlohmann::json cfg{{"network", "network.json"},
                             {"inputs", "inputs.json"},
                             {"output", "out"},
                             {"seed", seed},
                             {"crossbar", {{"g_max", 1.0}, {"sigma_v", sigma_v}, {"levels", 128}, {"r", 1.0}}},
                             {"trials", 200},
                             {"optimize", {{"budget", 1.0}, {"population", 20}, {"generations", 20}}}};
    detail::write_json(dir / "config.json", cfg);
    std::cout << "wrote " << arch << " fixture to " << dir << '\n';
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return static_cast<int>(e.kind());
  }
  return 0;
}
