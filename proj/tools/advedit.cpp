// Command-line front end: distances, scripts, training, attacks, Gram
// matrices, synthetic data and the full evaluation protocol.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "advedit/advedit.hpp"

namespace {

using namespace advedit;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A tree file holds one tree in the text grammar; surrounding whitespace is ignored.
Tree read_tree_file(const std::string& path) {
  std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  const auto last = text.find_last_not_of(" \t\r\n");
  if (first == std::string::npos) throw ParseError("'" + path + "' is empty", 0);
  return parse(std::string_view(text).substr(first, last - first + 1));
}

template <typename Write>
void write_output(const std::string& path, Write&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write(out);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double mean_pairwise(const DistanceMatrix& d) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      sum += d(i, j);
      ++pairs;
    }
  }
  return pairs > 0 && sum > 0.0 ? sum / static_cast<double>(pairs) : 1.0;
}

const char* kConfigHelp = R"(Config file keys (JSON object):
  dataset        path to a JSONL dataset ({"tree": "...", "label": k} per line)
  synthetic      instead of dataset: {n_examples, alphabet, max_depth, max_children, motif,
                 root_label, motif_anywhere, seed}
  classifiers    list from linear, rbf, st, sst, pt, rec, tes (or "classifier": one name)
  grids          {C, sigma_factor, lambda, tes_scale, tes_dim, rec_dim}; sigma_factor multiplies
                 the mean pairwise TED of the outer-training split
  folds          outer folds (default 5), inner_folds (default 3)
  seed           experiment seed (default 1)
  attacks        {methods: ["random", "backtrace"], cap: 100, targeted: false}
  normalize      cosine-normalize tree kernels (default false)
  rec            {learning_rate, loss_threshold, max_iterations}
  tes_ridge      readout ridge (default 1e-8)
  threads        worker threads, 0 for all cores (results do not depend on it))";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial edit attacks on tree-structured data"};
  app.require_subcommand(1);

  std::string file_a, file_b;
  auto* dist = app.add_subcommand("dist", "Print the tree edit distance between two tree files");
  dist->add_option("a", file_a)->required();
  dist->add_option("b", file_b)->required();

  auto* script = app.add_subcommand("script", "Print a minimal edit script turning tree A into tree B");
  script->add_option("a", file_a)->required();
  script->add_option("b", file_b)->required();

  std::string data_path, model_path, out_path, kind_name;
  std::uint64_t seed = 1;
  std::size_t threads = 0;

  double c = 1.0, sigma_factor = 1.0, lambda = 0.1, scale = 1.0;
  std::size_t dim = 10;
  bool normalize = false;
  auto* train = app.add_subcommand("train", "Train one classifier on a dataset and save it");
  train->add_option("--kind", kind_name, "linear, rbf, st, sst, pt, rec or tes")->required();
  train->add_option("--data", data_path, "JSONL dataset")->required();
  train->add_option("--out", out_path, "model file (stdout when omitted)");
  train->add_option("--C", c, "SVM box constraint")->capture_default_str();
  train->add_option("--sigma-factor", sigma_factor, "RBF width as a multiple of the mean pairwise TED")
      ->capture_default_str();
  train->add_option("--lambda", lambda, "tree kernel decay")->capture_default_str();
  train->add_option("--dim", dim, "embedding dimension (rec, tes)")->capture_default_str();
  train->add_option("--scale", scale, "reservoir scale (tes)")->capture_default_str();
  train->add_flag("--normalize", normalize, "cosine-normalize tree kernels");
  train->add_option("--seed", seed)->capture_default_str();

  std::string method_str = "backtrace";
  std::size_t cap = 100;
  bool targeted = false;
  auto* attack = app.add_subcommand("attack", "Attack every correctly classified point of a dataset");
  attack->add_option("--method", method_str, "random or backtrace")
      ->check(CLI::IsMember({"random", "backtrace"}))
      ->capture_default_str();
  attack->add_option("--model", model_path)->required();
  attack->add_option("--data", data_path)->required();
  attack->add_option("--seed", seed)->capture_default_str();
  attack->add_option("--cap", cap, "edit budget of the random attack")->capture_default_str();
  attack->add_flag("--targeted", targeted, "target the next class instead of the nearest other label");
  attack->add_option("--out", out_path, "JSONL output (stdout when omitted)");

  std::string config_path, meta_path;
  auto* eval = app.add_subcommand("eval", "Run the crossvalidated attack experiment");
  eval->footer(kConfigHelp);
  eval->add_option("--config", config_path, "JSON experiment config")->required();
  eval->add_option("--out", out_path, "CSV report (stdout when omitted)");
  eval->add_option("--meta", meta_path, "metadata sidecar (default: <out>.meta.json)");

  std::string kernel_str;
  bool clip = false;
  auto* gram = app.add_subcommand("gram", "Write the Gram matrix of a dataset");
  gram->add_option("--kernel", kernel_str, "linear, rbf, st, sst or pt")->required();
  gram->add_option("--data", data_path)->required();
  gram->add_option("--lambda", lambda, "tree kernel decay")->capture_default_str();
  gram->add_option("--sigma-factor", sigma_factor, "RBF width as a multiple of the mean pairwise TED")
      ->capture_default_str();
  gram->add_flag("--normalize", normalize, "cosine-normalize tree kernels");
  gram->add_flag("--clip", clip, "clip negative eigenvalues");
  gram->add_option("--out", out_path, "matrix file; provenance goes to <out>.meta.json")->required();
  gram->add_option("--threads", threads)->capture_default_str();

  SynthSpec spec;
  std::string alphabet_str = "a,b,c,d,m,p,q,r";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic motif dataset");
  synth->add_option("--n", spec.n_examples)->capture_default_str();
  synth->add_option("--alphabet", alphabet_str, "comma-separated labels")->capture_default_str();
  synth->add_option("--max-depth", spec.max_depth)->capture_default_str();
  synth->add_option("--max-children", spec.max_children)->capture_default_str();
  synth->add_option("--motif", spec.motif)->capture_default_str();
  synth->add_option("--root-label", spec.root_label)->capture_default_str();
  synth->add_flag("--motif-anywhere", spec.motif_anywhere, "attach the motif under a random node instead of the root");
  synth->add_option("--seed", seed)->capture_default_str();
  synth->add_option("--out", out_path, "JSONL output (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (dist->parsed()) {
      std::cout << ted(read_tree_file(file_a), read_tree_file(file_b)) << '\n';
    } else if (script->parsed()) {
      std::cout << to_string(backtrace(read_tree_file(file_a), read_tree_file(file_b))) << '\n';
    } else if (train->parsed()) {
      const Dataset d = load_dataset(data_path);
      StoredModel m;
      for (std::size_t i = 0; i < d.size(); ++i) m.training.push_back({d.trees[i], d.labels[i]});
      json hp{{"kind", kind_name}, {"seed", seed}};
      Rng rng(seed);
      if (kind_name == "linear" || kind_name == "rbf") {
        const DistanceMatrix dm = pairwise_ted(std::span<const Tree>(d.trees));
        const double sigma = sigma_factor * mean_pairwise(dm);
        std::vector<std::size_t> idx(d.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        m.classifier = train_distance_svm(d.trees, to_matrix(dm), idx, d.labels, kernel_from_name(kind_name), sigma, c);
        hp["C"] = c;
        if (kind_name == "rbf") hp["sigma"] = sigma;
      } else if (kind_name == "st" || kind_name == "sst" || kind_name == "pt") {
        m.classifier = train_tree_kernel_svm(d.trees, d.labels, kernel_from_name(kind_name), lambda, normalize, c);
        hp["C"] = c;
        hp["lambda"] = lambda;
        hp["normalize"] = normalize;
      } else if (kind_name == "rec") {
        RecNetOptions o;
        o.dim = dim;
        RecNetTraining t = recnet_train(d.trees, d.labels, o, rng);
        if (!t.warning.empty()) std::cerr << "warning: " << t.warning << '\n';
        m.classifier = std::make_unique<RecursiveClassifier>(std::move(t.params), "rec");
        hp["dim"] = dim;
      } else if (kind_name == "tes") {
        TesOptions o;
        o.dim = dim;
        o.scale = scale;
        m.classifier = std::make_unique<RecursiveClassifier>(tes_train(d.trees, d.labels, o, rng), "tes");
        hp["dim"] = dim;
        hp["scale"] = scale;
      } else {
        throw ModelError("unknown classifier kind '" + kind_name + "'");
      }
      m.hyperparameters = hp;
      write_output(out_path, [&](std::ostream& out) { save_model(out, m); });
    } else if (attack->parsed()) {
      std::ifstream min(model_path);
      if (!min) throw ModelError("cannot open model file '" + model_path + "'");
      const StoredModel m = load_model(min);
      const Dataset d = load_dataset(data_path);
      std::vector<Tree> train_trees;
      std::vector<int> train_labels;
      for (const auto& ex : m.training) {
        train_trees.push_back(ex.tree);
        train_labels.push_back(ex.label);
      }
      const ReferencePool pool = build_reference_pool(train_trees, train_labels, *m.classifier);
      Alphabet alphabet = alphabet_of(train_trees);
      if (const auto* rc = dynamic_cast<const RecursiveClassifier*>(m.classifier.get())) alphabet = rc->params().alphabet;
      AttackOptions options;
      options.method = method_from_name(method_str);
      options.cap = cap;
      options.targeted = targeted;
      write_output(out_path, [&](std::ostream& out) {
        for (std::size_t i = 0; i < d.size(); ++i) {
          json rec{{"index", i}, {"method", method_name(options.method)}};
          if (m.classifier->predict(d.trees[i]) != d.labels[i]) {
            rec["status"] = "misclassified";
            out << rec.dump() << '\n';
            continue;
          }
          Rng rng(derive_seed(seed, {i}));
          const AttackResult r = attack_point(d.trees[i], d.labels[i], *m.classifier, pool, alphabet, options, rng);
          auto opt = [](const auto& v) { return v ? json(*v) : json(); };
          rec["status"] = r.adversarial ? "attacked" : "failed";
          rec["success"] = r.success;
          rec["prefix_length"] = r.prefix.size();
          rec["queries"] = r.queries;
          rec["d_zx"] = opt(r.d_zx);
          rec["d_zy"] = opt(r.d_zy);
          rec["ratio"] = opt(r.ratio);
          rec["z"] = r.adversarial ? json(serialize(*r.adversarial)) : json();
          rec["script"] = to_string(r.prefix);
          if (!r.failure.empty()) rec["failure"] = r.failure;
          out << rec.dump() << '\n';
        }
      });
    } else if (eval->parsed()) {
      const ExperimentConfig config = config_from_json(json::parse(read_file(config_path)));
      const Dataset d = load_experiment_data(config);
      const auto start = std::chrono::steady_clock::now();
      const ExperimentResult r = run_experiment(d, config);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_output(out_path, [&](std::ostream& out) { write_report_csv(out, r.rows); });
      if (meta_path.empty() && !out_path.empty() && out_path != "-") meta_path = out_path + ".meta.json";
      if (!meta_path.empty()) {
        std::ofstream meta(meta_path);
        if (!meta) throw Error("cannot write '" + meta_path + "'");
        meta << report_metadata(d, config, r).dump(2) << '\n';
      }
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cerr << "finished in " << seconds << " s\n";
    } else if (gram->parsed()) {
      const Dataset d = load_dataset(data_path);
      const KernelKind kind = kernel_from_name(kernel_str);
      GramMatrix g;
      if (is_distance_kernel(kind)) {
        const DistanceMatrix dm = pairwise_ted(std::span<const Tree>(d.trees), threads);
        g = kind == KernelKind::linear ? linear_kernel(to_matrix(dm))
                                       : rbf_kernel(to_matrix(dm), sigma_factor * mean_pairwise(dm));
      } else {
        std::vector<PreorderView> views;
        for (const Tree& t : d.trees) views.emplace_back(t);
        g = tree_kernel_gram(kind, views, lambda, normalize, threads);
      }
      if (clip) g = clip_psd(g);
      write_output(out_path, [&](std::ostream& out) { write_gram(out, g.values); });
      std::ofstream meta(out_path + ".meta.json");
      meta << json{{"kernel", kernel_name(g.provenance.kind)},
                   {"parameter", g.provenance.parameter},
                   {"normalized", g.provenance.normalized},
                   {"clipped", g.provenance.clipped},
                   {"dataset", data_path},
                   {"size", d.size()}}
                  .dump(2)
           << '\n';
    } else if (synth->parsed()) {
      spec.alphabet = split_list(alphabet_str);
      Rng rng(seed);
      const Dataset d = synth_generate(spec, rng);
      write_output(out_path, [&](std::ostream& out) { write_dataset(out, d); });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
