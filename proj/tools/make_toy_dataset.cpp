// Renders the synthetic shape set to disk in one of the ingestible formats.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "supmae/data/io.hpp"
#include "supmae/data/toyset.hpp"
#include "supmae/error.hpp"

int main(int argc, char** argv) {
  using namespace supmae;
  CLI::App app{"make_toy_dataset: write the synthetic 10-class shape set"};
  data::ToySpec spec;
  std::string out = "toy";
  std::string format = "raw-tensor-dir";
  app.add_option("--out", out, "output directory (train/ and test/ are created inside)");
  app.add_option("--format", format, "raw-tensor-dir or idx-ubyte")
      ->check(CLI::IsMember({"raw-tensor-dir", "idx-ubyte"}));
  app.add_option("--train", spec.train, "training samples");
  app.add_option("--test", spec.test, "test samples");
  app.add_option("--size", spec.size, "image side in pixels");
  app.add_option("--seed", spec.seed, "dataset seed");
  app.add_option("--background", spec.background, "background pattern amplitude");
  app.add_option("--noise", spec.noise, "pixel noise std");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto split = data::make_toy_dataset(spec);
    const std::filesystem::path root(out);
    for (auto [name, ds] : {std::pair{"train", &split.train}, std::pair{"test", &split.test}}) {
      const auto dir = root / name;
      std::filesystem::create_directories(dir);
      if (format == "raw-tensor-dir") {
        data::write_raw_tensor_dir(*ds, dir);
      } else {
        data::write_idx_ubyte(*ds, dir, name);
      }
      std::cout << dir.string() << ": " << ds->size() << " samples\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
