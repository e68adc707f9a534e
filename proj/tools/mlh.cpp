// mlh: operator CLI for the hash-center training and retrieval pipeline.
//
//   gen-centers  build a hash-center codebook (MLHC)
//   synth        generate a synthetic clustered dataset (MLHF)
//   split        partition a dataset into train/query/database files
//   train        run the dual-branch training loop, write checkpoint + loss log
//   encode       binarize a dataset through a trained model (MLHB)
//   eval         mAP@k and precision-recall from code files
//   ablate       grid of train+eval cells over the ablation switches
//
// Every command writes a .manifest.json next to its primary output with the
// fully resolved options, so a run can be reproduced from the manifest alone.
// Failures print a single line "MLH-ERROR <code>: <message>" and exit 1.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlh/codebook.hpp"
#include "mlh/dataio.hpp"
#include "mlh/retrieval.hpp"
#include "mlh/trainer.hpp"

using nlohmann::json;

namespace {

struct ManifestClock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void write_manifest(const std::string& artifact_path, const std::string& subcommand,
                    const json& options, const json& inputs, const json& outputs,
                    std::uint64_t seed, const json& format_versions, double wall) {
  json m{{"subcommand", subcommand}, {"options", options},   {"inputs", inputs},
         {"outputs", outputs},       {"seed", seed},         {"format_versions", format_versions},
         {"wall_clock_seconds", wall}};
  mlh::atomic_write_text(artifact_path + ".manifest.json", m.dump(2) + "\n");
}

std::string read_text_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw mlh::Error(std::string(what) + "_not_found",
                            std::string(what) + " not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

mlh::Branch parse_branch(const std::string& value) {
  if (value == "c" || value == "center") return mlh::Branch::Center;
  if (value == "p" || value == "pairwise") return mlh::Branch::Pairwise;
  throw mlh::Error("bad_flag", "branch must be c or p");
}

// ---------------------------------------------------------------------------
// gen-centers

struct GenCentersArgs {
  std::uint32_t bits = 16;
  std::uint32_t classes = 10;
  std::uint64_t seed = 1;
  std::string out;
  std::string mode = "auto";  // auto | paper | gv
  std::uint32_t max_attempts = 100;
};

int run_gen_centers(const GenCentersArgs& a) {
  ManifestClock clock;
  mlh::HashConfig cfg{a.bits, a.classes};
  cfg.validate();

  mlh::GvMode mode_used;
  std::uint32_t d;
  if (a.mode == "gv") {
    mode_used = mlh::GvMode::StandardGv;
    d = mlh::gv_min_distance_standard(cfg);
  } else if (a.mode == "paper") {
    mode_used = mlh::GvMode::PaperLiteral;
    d = mlh::gv_min_distance(cfg, mlh::GvMode::PaperLiteral);
  } else if (a.mode == "auto") {
    auto paper = mlh::gv_min_distance_paper(cfg);
    mode_used = paper ? mlh::GvMode::PaperLiteral : mlh::GvMode::StandardGv;
    d = paper ? *paper : mlh::gv_min_distance_standard(cfg);
  } else {
    throw mlh::Error("bad_flag", "mode must be auto, paper, or gv");
  }

  mlh::Codebook cb = mlh::generate_centers_with_fallback(cfg, d, a.seed, a.max_attempts);
  cb.mode_used = mode_used;
  std::uint32_t verified = mlh::verify_codebook(cb);
  mlh::save_codebook(cb, a.out);

  write_manifest(a.out, "gen-centers",
                 json{{"bits", a.bits},
                      {"classes", a.classes},
                      {"seed", a.seed},
                      {"mode", a.mode},
                      {"mode_used", mode_used == mlh::GvMode::PaperLiteral ? "paper" : "gv"},
                      {"max_attempts", a.max_attempts},
                      {"d", cb.d},
                      {"requested_d", cb.requested_d},
                      {"restarts_used", cb.restarts_used},
                      {"verified_min_distance", verified}},
                 json::array(), json::array({a.out}), a.seed, json{{"mlhc", 1}},
                 clock.seconds());

  std::cout << "codebook q=" << cfg.q << " c=" << cfg.c << " d=" << cb.d
            << (cb.d != cb.requested_d
                    ? " (fell back from d=" + std::to_string(cb.requested_d) + ")"
                    : "")
            << " mode=" << (mode_used == mlh::GvMode::PaperLiteral ? "paper" : "gv")
            << " verified_min=" << verified << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::uint32_t classes = 10;
  std::uint32_t per_class = 100;
  std::uint32_t dim = 32;
  double spread = 0.15;
  std::uint64_t seed = 1;
  double multilabel_frac = 0.0;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  ManifestClock clock;
  mlh::FeatureDataset ds = mlh::synth_clusters(a.classes, a.per_class, a.dim, a.spread,
                                               a.seed, a.multilabel_frac);
  mlh::save_features(ds, a.out);
  write_manifest(a.out, "synth",
                 json{{"classes", a.classes},
                      {"per_class", a.per_class},
                      {"dim", a.dim},
                      {"spread", a.spread},
                      {"seed", a.seed},
                      {"multilabel_frac", a.multilabel_frac}},
                 json::array(), json::array({a.out}), a.seed, json{{"mlhf", 1}},
                 clock.seconds());
  std::cout << "dataset n=" << ds.size() << " dim=" << a.dim << " classes=" << a.classes
            << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
  std::string data;
  std::uint32_t n_query = 0;
  std::uint32_t n_train = 0;
  std::uint64_t seed = 1;
  std::string out_prefix;
};

int run_split(const SplitArgs& a) {
  ManifestClock clock;
  mlh::FeatureDataset ds = mlh::load_features(a.data);
  mlh::split_dataset(ds, a.n_query, a.n_train, a.seed);
  std::string train_path = a.out_prefix + ".train.mlhf";
  std::string query_path = a.out_prefix + ".query.mlhf";
  std::string db_path = a.out_prefix + ".database.mlhf";
  mlh::save_features(ds.subset(ds.ids_in(mlh::Split::Train)), train_path);
  mlh::save_features(ds.subset(ds.ids_in(mlh::Split::Query)), query_path);
  mlh::save_features(ds.subset(ds.ids_in(mlh::Split::Database)), db_path);
  write_manifest(a.out_prefix, "split",
                 json{{"data", a.data},
                      {"n_query", a.n_query},
                      {"n_train", a.n_train},
                      {"seed", a.seed},
                      {"out_prefix", a.out_prefix}},
                 json::array({a.data}), json::array({train_path, query_path, db_path}),
                 a.seed, json{{"mlhf", 1}}, clock.seconds());
  std::cout << "split train=" << a.n_train << " query=" << a.n_query
            << " database=" << ds.ids_in(mlh::Split::Database).size() << " -> "
            << a.out_prefix << ".{train,query,database}.mlhf\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string centers;
  std::string config;
  std::string out;
  std::string log;
  bool debug_graph = false;
};

json train_config_json(const mlh::TrainConfig& cfg) {
  return json{{"lambda1", cfg.lambda1},
              {"lambda2", cfg.lambda2},
              {"lambda3", cfg.lambda3},
              {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"rmsprop_decay", cfg.rmsprop_decay},
              {"rmsprop_eps", cfg.rmsprop_eps},
              {"seed", cfg.seed},
              {"mutual_parity_invert", cfg.mutual_parity_invert},
              {"enable_ml", cfg.enable_ml},
              {"enable_moh", cfg.enable_moh},
              {"feature_dim", cfg.moh.feature_dim},
              {"hidden_dim", cfg.moh.hidden_dim},
              {"expert_count", cfg.moh.expert_count},
              {"activation_ratio", cfg.moh.activation_ratio},
              {"shared_experts", cfg.moh.shared_experts},
              {"use_softmax_gate", cfg.moh.use_softmax_gate},
              {"expert_kind", mlh::expert_kind_name(cfg.moh.expert_kind)},
              {"backbone", cfg.backbone.kind == mlh::BackboneKind::Identity ? "identity" : "mlp"},
              {"backbone_input_dim", cfg.backbone.input_dim},
              {"backbone_hidden_dim", cfg.backbone.hidden_dim}};
}

int run_train(const TrainArgs& a) {
  ManifestClock clock;
  mlh::TrainConfig cfg = mlh::parse_train_config(read_text_file(a.config, "config"));
  cfg.debug_graph = a.debug_graph;
  mlh::FeatureDataset data = mlh::load_features(a.data);
  mlh::Codebook cb = mlh::load_codebook(a.centers);

  mlh::TrainResult result = mlh::train(data, cb, cfg);
  mlh::save_model(result.model, a.out);

  std::ostringstream log_lines;
  for (const auto& rec : result.report.epochs)
    log_lines << mlh::breakdown_json_line(rec.epoch, rec.mean) << "\n";
  mlh::atomic_write_text(a.log, log_lines.str());

  write_manifest(a.out, "train",
                 json{{"data", a.data},
                      {"centers", a.centers},
                      {"config", a.config},
                      {"log", a.log},
                      {"resolved_config", train_config_json(cfg)}},
                 json::array({a.data, a.centers, a.config}),
                 json::array({a.out, a.log}), cfg.seed,
                 json{{"mlhf", 1}, {"mlhc", 1}, {"mlhm", 1}},
                 result.report.wall_seconds);

  const auto& first = result.report.epochs.front().mean;
  const auto& last = result.report.epochs.back().mean;
  std::cout << "trained " << cfg.epochs << " epochs on n=" << data.size()
            << ": L " << first.total << " -> " << last.total << " (L_C=" << last.l_center
            << " L_P=" << last.l_pairwise << " L_M=" << last.l_mutual << "), "
            << result.report.wall_seconds << "s -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// encode

struct EncodeArgs {
  std::string model;
  std::string data;
  std::string branch = "c";
  std::string out;
};

int run_encode(const EncodeArgs& a) {
  ManifestClock clock;
  mlh::MoHModel model = mlh::load_model(a.model);
  mlh::FeatureDataset data = mlh::load_features(a.data);
  mlh::Branch branch = parse_branch(a.branch);
  mlh::Tensor codes = mlh::encode(model, data.features, branch);
  mlh::save_packed(mlh::pack(codes), a.out);
  write_manifest(a.out, "encode",
                 json{{"model", a.model}, {"data", a.data}, {"branch", a.branch}},
                 json::array({a.model, a.data}), json::array({a.out}), 0,
                 json{{"mlhm", 1}, {"mlhf", 1}, {"mlhb", 1}}, clock.seconds());
  std::cout << "encoded n=" << codes.rows() << " q=" << codes.cols() << " branch="
            << mlh::branch_name(branch) << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string query_codes;
  std::string db_codes;
  std::string query_labels;
  std::string db_labels;
  std::uint32_t k = 100;
  std::string out;
  std::string pr;  // optional CSV
};

int run_eval(const EvalArgs& a) {
  ManifestClock clock;
  mlh::PackedCodes queries = mlh::load_packed(a.query_codes);
  mlh::PackedCodes db = mlh::load_packed(a.db_codes);
  mlh::FeatureDataset qd = mlh::load_features(a.query_labels);
  mlh::FeatureDataset dbd = mlh::load_features(a.db_labels);
  mlh::check(qd.size() == queries.n, "shape_mismatch",
             "query labels and codes disagree on n");
  mlh::check(dbd.size() == db.n, "shape_mismatch",
             "database labels and codes disagree on n");
  auto relevance = mlh::label_relevance(qd.labels, dbd.labels);

  auto ranked = mlh::search(queries, db, a.k);
  mlh::EvalResult res = mlh::map_at_k(ranked, relevance, db.n, a.k);

  json out{{"map", res.map},
           {"k", res.k},
           {"per_query_ap", res.per_query_ap},
           {"queries_evaluated", res.queries_evaluated},
           {"queries_skipped", res.queries_skipped}};
  mlh::atomic_write_text(a.out, out.dump(2) + "\n");

  if (!a.pr.empty()) {
    auto full = mlh::search(queries, db, db.n);
    auto points = mlh::mean_pr_curve(full, relevance, db.n);
    std::ostringstream csv;
    csv << "rank,recall,precision\n";
    for (const auto& p : points)
      csv << p.rank << "," << p.recall << "," << p.precision << "\n";
    mlh::atomic_write_text(a.pr, csv.str());
  }

  write_manifest(a.out, "eval",
                 json{{"query_codes", a.query_codes},
                      {"db_codes", a.db_codes},
                      {"query_labels", a.query_labels},
                      {"db_labels", a.db_labels},
                      {"k", a.k},
                      {"pr", a.pr}},
                 json::array({a.query_codes, a.db_codes, a.query_labels, a.db_labels}),
                 a.pr.empty() ? json::array({a.out}) : json::array({a.out, a.pr}), 0,
                 json{{"mlhb", 1}, {"mlhf", 1}}, clock.seconds());

  std::cout << "mAP@" << a.k << " = " << res.map << " over " << res.queries_evaluated
            << " queries (" << res.queries_skipped << " skipped) -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
  std::string data;
  std::string centers;
  std::string config;
  std::string grid;
  std::uint32_t k = 100;
  std::uint32_t n_query = 0;
  std::uint32_t n_train = 0;
  std::uint64_t split_seed = 1;
  std::uint32_t repeats = 1;
  std::string out;
};

std::vector<std::string> split_csv_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = mlh::detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

std::vector<GridAxis> parse_grid(const std::string& text) {
  static const std::vector<std::string> allowed{
      "enable_ml",      "enable_moh", "shared_experts", "use_softmax_gate",
      "expert_kind",    "lambda1",    "lambda2",        "lambda3",
      "expert_count",   "activation_ratio"};
  std::vector<GridAxis> axes;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = mlh::detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    mlh::check(eq != std::string::npos, "bad_grid",
               "grid line " + std::to_string(line_no) + " is not 'key = v1,v2'");
    GridAxis axis;
    axis.key = mlh::detail::trim(line.substr(0, eq));
    mlh::check(std::find(allowed.begin(), allowed.end(), axis.key) != allowed.end(),
               "bad_grid", "grid key '" + axis.key + "' is not sweepable");
    axis.values = split_csv_list(line.substr(eq + 1));
    mlh::check(!axis.values.empty(), "bad_grid", "grid key '" + axis.key + "' has no values");
    axes.push_back(std::move(axis));
  }
  return axes;
}

int run_ablate(const AblateArgs& a) {
  ManifestClock clock;
  mlh::TrainConfig base = mlh::parse_train_config(read_text_file(a.config, "config"));
  std::vector<GridAxis> axes = parse_grid(read_text_file(a.grid, "grid"));
  mlh::FeatureDataset full = mlh::load_features(a.data);
  mlh::Codebook cb = mlh::load_codebook(a.centers);
  mlh::check(a.n_query >= 1 && a.n_train >= 2, "bad_flag",
             "ablate needs --n-query >= 1 and --n-train >= 2");
  mlh::split_dataset(full, a.n_query, a.n_train, a.split_seed);
  mlh::FeatureDataset train_set = full.subset(full.ids_in(mlh::Split::Train));
  mlh::FeatureDataset query_set = full.subset(full.ids_in(mlh::Split::Query));
  mlh::FeatureDataset db_set = full.subset(full.ids_in(mlh::Split::Database));
  auto relevance = mlh::label_relevance(query_set.labels, db_set.labels);
  mlh::PackedCodes packed_queries, packed_db;

  std::size_t cells = 1;
  for (const auto& ax : axes) cells *= ax.values.size();
  if (axes.empty()) cells = 0;  // an empty grid runs nothing

  std::ostringstream csv;
  csv << "cell_id,enable_ml,enable_moh,shared,softmax,lambda1,lambda2,lambda3,m,ratio,"
         "branch,map,seed\n";

  for (std::size_t cell = 0; cell < cells; ++cell) {
    mlh::TrainConfig cfg = base;
    std::size_t rest = cell;
    // Last axis varies fastest.
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      const std::string& v = it->values[rest % it->values.size()];
      rest /= it->values.size();
      mlh::apply_config_line(cfg, it->key, v);
    }

    auto row_prefix = [&](std::uint64_t) {
      std::ostringstream os;
      os << cell << "," << (cfg.enable_ml ? "true" : "false") << ","
         << (cfg.enable_moh ? "true" : "false") << ","
         << (cfg.moh.shared_experts ? "true" : "false") << ","
         << (cfg.moh.use_softmax_gate ? "true" : "false") << "," << cfg.lambda1 << ","
         << cfg.lambda2 << "," << cfg.lambda3 << "," << cfg.moh.expert_count << ","
         << cfg.moh.activation_ratio;
      return os.str();
    };

    double mean_map[2] = {0.0, 0.0};
    std::uint32_t ok_runs = 0;
    for (std::uint32_t rep = 0; rep < a.repeats; ++rep) {
      cfg.seed = base.seed + rep;
      try {
        mlh::TrainResult result = mlh::train(train_set, cb, cfg);
        for (mlh::Branch branch : {mlh::Branch::Center, mlh::Branch::Pairwise}) {
          packed_queries = mlh::pack(mlh::encode(result.model, query_set.features, branch));
          packed_db = mlh::pack(mlh::encode(result.model, db_set.features, branch));
          auto ranked = mlh::search(packed_queries, packed_db, a.k);
          mlh::EvalResult res = mlh::map_at_k(ranked, relevance, packed_db.n, a.k);
          mean_map[std::size_t(branch)] += res.map;
          csv << row_prefix(cfg.seed) << "," << mlh::branch_name(branch) << ","
              << res.map << "," << cfg.seed << "\n";
        }
        ++ok_runs;
      } catch (const mlh::Error& e) {
        std::cerr << "cell " << cell << " seed " << cfg.seed << " failed: " << e.what()
                  << "\n";
        for (mlh::Branch branch : {mlh::Branch::Center, mlh::Branch::Pairwise})
          csv << row_prefix(cfg.seed) << "," << mlh::branch_name(branch) << ",nan,"
              << cfg.seed << "\n";
      }
    }
    for (mlh::Branch branch : {mlh::Branch::Center, mlh::Branch::Pairwise}) {
      double mean = ok_runs > 0
                        ? mean_map[std::size_t(branch)] / double(ok_runs)
                        : std::numeric_limits<double>::quiet_NaN();
      csv << row_prefix(0) << "," << mlh::branch_name(branch) << "," << mean
          << ",mean\n";
    }
  }

  mlh::atomic_write_text(a.out, csv.str());
  json axes_json = json::array();
  for (const auto& ax : axes) axes_json.push_back(json{{"key", ax.key}, {"values", ax.values}});
  write_manifest(a.out, "ablate",
                 json{{"data", a.data},
                      {"centers", a.centers},
                      {"config", a.config},
                      {"grid", a.grid},
                      {"grid_axes", axes_json},
                      {"k", a.k},
                      {"n_query", a.n_query},
                      {"n_train", a.n_train},
                      {"split_seed", a.split_seed},
                      {"repeats", a.repeats},
                      {"base_seed", base.seed}},
                 json::array({a.data, a.centers, a.config, a.grid}),
                 json::array({a.out}), base.seed,
                 json{{"mlhf", 1}, {"mlhc", 1}}, clock.seconds());
  std::cout << "ablation grid: " << cells << " cells x " << a.repeats << " seeds -> "
            << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MLH: dual-branch hash learning with a mixture of hash experts"};
  app.require_subcommand(1);

  GenCentersArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-centers", "generate a hash-center codebook");
  gen_cmd->add_option("--bits", gen.bits, "code length q")->required();
  gen_cmd->add_option("--classes", gen.classes, "number of classes c")->required();
  gen_cmd->add_option("--seed", gen.seed, "construction seed");
  gen_cmd->add_option("--out", gen.out, "output codebook path")->required();
  gen_cmd->add_option("--mode", gen.mode, "distance rule: auto|paper|gv");
  gen_cmd->add_option("--max-attempts", gen.max_attempts, "construction restarts");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic feature dataset");
  synth_cmd->add_option("--classes", synth.classes)->required();
  synth_cmd->add_option("--per-class", synth.per_class)->required();
  synth_cmd->add_option("--dim", synth.dim)->required();
  synth_cmd->add_option("--spread", synth.spread)->required();
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--multilabel-frac", synth.multilabel_frac);
  synth_cmd->add_option("--out", synth.out)->required();

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "split a dataset into train/query/database");
  split_cmd->add_option("--data", split.data)->required();
  split_cmd->add_option("--n-query", split.n_query)->required();
  split_cmd->add_option("--n-train", split.n_train)->required();
  split_cmd->add_option("--seed", split.seed);
  split_cmd->add_option("--out-prefix", split.out_prefix)->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train the dual-branch model");
  train_cmd->add_option("--data", train.data)->required();
  train_cmd->add_option("--centers", train.centers)->required();
  train_cmd->add_option("--config", train.config)->required();
  train_cmd->add_option("--out", train.out)->required();
  train_cmd->add_option("--log", train.log)->required();
  train_cmd->add_flag("--debug-graph", train.debug_graph,
                      "dump the first batch's graph to stderr");

  EncodeArgs encode;
  auto* encode_cmd = app.add_subcommand("encode", "binarize features through a model");
  encode_cmd->add_option("--model", encode.model)->required();
  encode_cmd->add_option("--data", encode.data)->required();
  encode_cmd->add_option("--branch", encode.branch, "c|p");
  encode_cmd->add_option("--out", encode.out)->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "mAP@k and PR curve over code files");
  eval_cmd->add_option("--query-codes", eval.query_codes)->required();
  eval_cmd->add_option("--db-codes", eval.db_codes)->required();
  eval_cmd->add_option("--query-labels", eval.query_labels)->required();
  eval_cmd->add_option("--db-labels", eval.db_labels)->required();
  eval_cmd->add_option("--k", eval.k);
  eval_cmd->add_option("--out", eval.out)->required();
  eval_cmd->add_option("--pr", eval.pr, "also write a rank,recall,precision CSV");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "train+eval over an ablation grid");
  ablate_cmd->add_option("--data", ablate.data)->required();
  ablate_cmd->add_option("--centers", ablate.centers)->required();
  ablate_cmd->add_option("--config", ablate.config)->required();
  ablate_cmd->add_option("--grid", ablate.grid)->required();
  ablate_cmd->add_option("--k", ablate.k);
  ablate_cmd->add_option("--n-query", ablate.n_query)->required();
  ablate_cmd->add_option("--n-train", ablate.n_train)->required();
  ablate_cmd->add_option("--split-seed", ablate.split_seed);
  ablate_cmd->add_option("--repeats", ablate.repeats);
  ablate_cmd->add_option("--out", ablate.out)->required();

  try {
    app.parse(argc, argv);
    if (gen_cmd->parsed()) return run_gen_centers(gen);
    if (synth_cmd->parsed()) return run_synth(synth);
    if (split_cmd->parsed()) return run_split(split);
    if (train_cmd->parsed()) return run_train(train);
    if (encode_cmd->parsed()) return run_encode(encode);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (ablate_cmd->parsed()) return run_ablate(ablate);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "MLH-ERROR bad_usage: " << e.what() << "\n";
    return 1;
  } catch (const mlh::Error& e) {
    std::cerr << "MLH-ERROR " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "MLH-ERROR internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
