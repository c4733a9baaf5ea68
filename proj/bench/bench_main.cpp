// Serial vs parallel GEMM and batched vs per-tree treeLSTM throughput.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <set>

#include "hce/common/alloc.hpp"
#include "hce/kernels/kernels.hpp"
#include "random_trees.hpp"
#include "throughput.hpp"

using namespace hce;

namespace {

double time_gemm(kernels::Backend backend, std::size_t n, int repeats) {
  kernels::set_backend(backend);
  std::vector<Real> a(n * n, 0.5), b(n * n, 0.25), c(n * n);
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    kernels::gemm(false, false, n, n, n, 1, a.data(), b.data(), 0, c.data());
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    best = std::min(best, d.count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  retain_heap_memory();
  CLI::App app{"hce benchmarks", "hce_bench"};
  std::size_t trees = 1000, hidden = 256, input_dim = 64;
  int threads = 1;
  std::string rules_path;
  std::vector<std::size_t> batches{1, 8, 32, 128, 512};
  bool no_gemm = false;
  app.add_option("--trees", trees, "Number of trees");
  app.add_option("--hidden", hidden, "treeLSTM hidden size");
  app.add_option("--input-dim", input_dim, "Token embedding size");
  app.add_option("--threads", threads, "Threads for the parallel backend");
  app.add_option("--rules", rules_path, "Use real decompositions from this IDS table");
  app.add_option("--batches", batches, "Batch sizes to time; speedups are relative to batch 1");
  app.add_flag("--no-gemm", no_gemm, "Skip the GEMM table");
  CLI11_PARSE(app, argc, argv);
  kernels::set_threads(threads);

  if (!no_gemm) {
    std::cout << "GEMM (n x n x n), best of 3\n";
    std::cout << std::setw(6) << "n" << std::setw(14) << "serial s" << std::setw(14) << "parallel s" << '\n';
    for (std::size_t n : {64, 128, 256, 512}) {
      const double s = time_gemm(kernels::Backend::kSerial, n, 3);
      const double p = time_gemm(kernels::Backend::kParallel, n, 3);
      std::cout << std::setw(6) << n << std::setw(14) << s << std::setw(14) << p << '\n';
    }
  }
  kernels::set_backend(kernels::Backend::kParallel);

  std::vector<ids::GlyphTree> forest;
  if (!rules_path.empty()) {
    forest = bench::sample_decompositions(ids::load_rule_table(rules_path), trees);
  } else {
    Rng rng(1);
    for (std::size_t i = 0; i < trees; ++i) {
      forest.push_back(oracle::random_tree(rng, 1 + static_cast<int>(rng.uniform_index(5)), U"一丨人口木火水土日月"));
    }
  }
  std::set<char32_t> tokens;
  for (const auto& t : forest) {
    for (const auto& n : t.nodes()) tokens.insert(n.label);
  }
  enc::EncoderConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = hidden;
  ad::ParameterStore store;
  Rng rng(2);
  auto encoder = enc::make_encoder(cfg, enc::TokenVocab(tokens), store, "enc", &rng);
  std::vector<const ids::GlyphTree*> ptrs;
  for (const auto& t : forest) ptrs.push_back(&t);

  std::cout << "\ntreeLSTM forward, " << forest.size() << " trees, H=" << hidden << " D=" << input_dim << '\n';
  std::cout << std::setw(8) << "batch" << std::setw(14) << "seconds" << std::setw(14) << "trees/s" << std::setw(10)
            << "speedup" << '\n';
  const auto one = bench::time_forward(*encoder, ptrs, 1);
  for (std::size_t batch : batches) {
    const auto t = batch == 1 ? one : bench::time_forward(*encoder, ptrs, batch);
    std::cout << std::setw(8) << batch << std::setw(14) << t.seconds << std::setw(14) << t.trees_per_second()
              << std::setw(10) << std::setprecision(3) << one.seconds / t.seconds << std::setprecision(6) << '\n';
  }
  return 0;
}
