#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mlh/codebook.hpp"
#include "mlh/dataio.hpp"
#include "mlh/retrieval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("mlh_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CmdResult run_cli(const std::string& args) {
  fs::path dir = work_dir();
  fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  std::string cmd = "cd " + dir.string() + " && " + MLH_CLI_PATH + " " + args + " > " +
                    out.string() + " 2> " + err.string();
  int status = std::system(cmd.c_str());
  int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code, slurp(out), slurp(err)};
}

}  // namespace

TEST_CASE("gen-centers writes a verifiable codebook and manifest") {
  auto res = run_cli("gen-centers --bits 16 --classes 10 --seed 1 --out cb.mlhc");
  INFO(res.err);
  REQUIRE(res.exit_code == 0);
  REQUIRE(res.out.find("d=5") != std::string::npos);

  mlh::Codebook cb = mlh::load_codebook((work_dir() / "cb.mlhc").string());
  REQUIRE(cb.d == 5);
  REQUIRE(mlh::verify_codebook(cb) >= 5);

  json manifest = json::parse(slurp(work_dir() / "cb.mlhc.manifest.json"));
  REQUIRE(manifest["subcommand"] == "gen-centers");
  REQUIRE(manifest["options"]["d"] == 5);
  REQUIRE(manifest["options"]["mode_used"] == "paper");
  REQUIRE(manifest["format_versions"]["mlhc"] == 1);
}

TEST_CASE("a command is reproducible from its manifest options") {
  REQUIRE(run_cli("gen-centers --bits 24 --classes 8 --seed 77 --out cb_a.mlhc").exit_code == 0);
  json manifest = json::parse(slurp(work_dir() / "cb_a.mlhc.manifest.json"));
  std::ostringstream cmd;
  cmd << "gen-centers --bits " << manifest["options"]["bits"].get<int>()
      << " --classes " << manifest["options"]["classes"].get<int>() << " --seed "
      << manifest["options"]["seed"].get<std::uint64_t>() << " --mode "
      << manifest["options"]["mode"].get<std::string>() << " --out cb_b.mlhc";
  REQUIRE(run_cli(cmd.str()).exit_code == 0);
  REQUIRE(mlh::read_file_bytes((work_dir() / "cb_a.mlhc").string()) ==
          mlh::read_file_bytes((work_dir() / "cb_b.mlhc").string()));
}

TEST_CASE("full pipeline: synth, split, train, encode, eval") {
  REQUIRE(run_cli("synth --classes 4 --per-class 20 --dim 16 --spread 0.1 --seed 5 "
                  "--out pipe.mlhf").exit_code == 0);
  REQUIRE(run_cli("split --data pipe.mlhf --n-query 8 --n-train 40 --seed 2 "
                  "--out-prefix pipe").exit_code == 0);
  {
    std::ofstream cfg(work_dir() / "pipe.cfg");
    cfg << "epochs = 8\nbatch_size = 16\nexpert_count = 4\nactivation_ratio = 0.5\n"
        << "seed = 11\nlearning_rate = 0.01\n";
  }
  auto train_res = run_cli("train --data pipe.train.mlhf --centers cb.mlhc --config "
                           "pipe.cfg --out pipe.mlhm --log pipe.jsonl");
  INFO(train_res.err);
  REQUIRE(train_res.exit_code == 1);  // codebook classes (10) != dataset classes (4)
  REQUIRE(train_res.err.find("MLH-ERROR shape_mismatch") != std::string::npos);

  REQUIRE(run_cli("gen-centers --bits 16 --classes 4 --seed 1 --out cb4.mlhc").exit_code == 0);
  train_res = run_cli("train --data pipe.train.mlhf --centers cb4.mlhc --config "
                      "pipe.cfg --out pipe.mlhm --log pipe.jsonl");
  INFO(train_res.err);
  REQUIRE(train_res.exit_code == 0);

  // Loss log: one JSON line per epoch with alternating parity.
  std::istringstream log(slurp(work_dir() / "pipe.jsonl"));
  std::string line;
  int epochs = 0;
  while (std::getline(log, line)) {
    json j = json::parse(line);
    REQUIRE(j["epoch"] == epochs);
    REQUIRE(j["parity"] == (epochs % 2 == 0 ? "center" : "pairwise"));
    ++epochs;
  }
  REQUIRE(epochs == 8);

  REQUIRE(run_cli("encode --model pipe.mlhm --data pipe.query.mlhf --branch c "
                  "--out pipe.q.mlhb").exit_code == 0);
  REQUIRE(run_cli("encode --model pipe.mlhm --data pipe.database.mlhf --branch c "
                  "--out pipe.db.mlhb").exit_code == 0);
  mlh::PackedCodes q = mlh::load_packed((work_dir() / "pipe.q.mlhb").string());
  REQUIRE(q.n == 8);
  REQUIRE(q.q == 16);

  auto eval_res = run_cli("eval --query-codes pipe.q.mlhb --db-codes pipe.db.mlhb "
                          "--query-labels pipe.query.mlhf --db-labels pipe.database.mlhf "
                          "--k 10 --out pipe.eval.json --pr pipe.pr.csv");
  INFO(eval_res.err);
  REQUIRE(eval_res.exit_code == 0);
  json eval = json::parse(slurp(work_dir() / "pipe.eval.json"));
  REQUIRE(eval["k"] == 10);
  REQUIRE(eval["map"].get<double>() >= 0.0);
  REQUIRE(eval["map"].get<double>() <= 1.0);
  REQUIRE(eval["per_query_ap"].size() == eval["queries_evaluated"].get<std::size_t>());

  std::string pr = slurp(work_dir() / "pipe.pr.csv");
  REQUIRE(pr.rfind("rank,recall,precision\n", 0) == 0);
}

TEST_CASE("eval yields mAP 1.0 when the database is the query set itself") {
  // Distinct codes, one per class: every query's nearest item is itself.
  mlh::Tensor codes(4, 16);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 16; ++c)
      codes(r, c) = ((c / (r + 1)) % 2 == 0) ? 1.0 : -1.0;
  mlh::save_packed(mlh::pack(codes), (work_dir() / "self.mlhb").string());
  mlh::FeatureDataset ds;
  ds.feature_dim = 1;
  ds.num_classes = 4;
  ds.features = mlh::Tensor(4, 1);
  ds.labels = mlh::Tensor(4, 4);
  for (std::size_t r = 0; r < 4; ++r) ds.labels(r, r) = 1.0;
  ds.split.assign(4, mlh::Split::Database);
  mlh::save_features(ds, (work_dir() / "self.mlhf").string());

  auto res = run_cli("eval --query-codes self.mlhb --db-codes self.mlhb "
                     "--query-labels self.mlhf --db-labels self.mlhf --k 1 "
                     "--out self.eval.json");
  INFO(res.err);
  REQUIRE(res.exit_code == 0);
  json eval = json::parse(slurp(work_dir() / "self.eval.json"));
  REQUIRE(eval["map"].get<double>() == 1.0);
}

TEST_CASE("missing config file is a single machine-parsable error line") {
  auto res = run_cli("train --data pipe.train.mlhf --centers cb.mlhc "
                     "--config missing.cfg --out x.mlhm --log x.jsonl");
  REQUIRE(res.exit_code == 1);
  REQUIRE(res.err.rfind("MLH-ERROR config_not_found: config not found", 0) == 0);
  REQUIRE(std::count(res.err.begin(), res.err.end(), '\n') == 1);
}

TEST_CASE("ablate: empty grid emits only the header; small grid fills rows") {
  { std::ofstream grid(work_dir() / "empty.grid"); }
  auto res = run_cli("ablate --data pipe.mlhf --centers cb4.mlhc --config pipe.cfg "
                     "--grid empty.grid --k 5 --n-query 8 --n-train 40 "
                     "--split-seed 2 --out empty.csv");
  INFO(res.err);
  REQUIRE(res.exit_code == 0);
  REQUIRE(slurp(work_dir() / "empty.csv") ==
          "cell_id,enable_ml,enable_moh,shared,softmax,lambda1,lambda2,lambda3,m,ratio,"
          "branch,map,seed\n");

  {
    std::ofstream grid(work_dir() / "table2.grid");
    grid << "enable_ml = false,true\nenable_moh = false,true\n";
  }
  res = run_cli("ablate --data pipe.mlhf --centers cb4.mlhc --config pipe.cfg "
                "--grid table2.grid --k 5 --n-query 8 --n-train 40 --split-seed 2 "
                "--repeats 2 --out table2.csv");
  INFO(res.err);
  REQUIRE(res.exit_code == 0);
  std::istringstream csv(slurp(work_dir() / "table2.csv"));
  std::string line;
  std::getline(csv, line);  // header
  int rows = 0, mean_rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    mean_rows += line.find(",mean") != std::string::npos;
  }
  // 4 cells x 2 branches x (2 seeds + 1 mean row)
  REQUIRE(rows == 4 * 2 * 3);
  REQUIRE(mean_rows == 8);

  json manifest = json::parse(slurp(work_dir() / "table2.csv.manifest.json"));
  REQUIRE(manifest["options"]["grid_axes"].size() == 2);
}

TEST_CASE("a failing ablation cell is recorded as nan and the grid continues") {
  {
    std::ofstream grid(work_dir() / "bad.grid");
    grid << "activation_ratio = 2.0,0.5\n";  // 2.0 is out of range: cell 0 fails
  }
  auto res = run_cli("ablate --data pipe.mlhf --centers cb4.mlhc --config pipe.cfg "
                     "--grid bad.grid --k 5 --n-query 8 --n-train 40 --split-seed 2 "
                     "--out bad.csv");
  INFO(res.err);
  REQUIRE(res.exit_code == 0);
  std::istringstream csv(slurp(work_dir() / "bad.csv"));
  std::string line;
  std::getline(csv, line);
  int nan_rows = 0, numeric_rows = 0;
  while (std::getline(csv, line)) {
    if (line.find(",nan,") != std::string::npos) ++nan_rows;
    else ++numeric_rows;
  }
  REQUIRE(nan_rows >= 2);      // both branches of the failed cell
  REQUIRE(numeric_rows >= 2);  // the healthy cell still ran
}

TEST_CASE("unknown flags fail with a single error line") {
  auto res = run_cli("gen-centers --bits 16 --classes 4 --bogus 1 --out x.mlhc");
  REQUIRE(res.exit_code == 1);
  REQUIRE(res.err.rfind("MLH-ERROR bad_usage:", 0) == 0);
}

TEST_CASE("lambda3 sweep mirrors the tuning-grid structure") {
  {
    std::ofstream grid(work_dir() / "l3.grid");
    grid << "lambda3 = 0.5,1,2,4\n";
  }
  auto res = run_cli("ablate --data pipe.mlhf --centers cb4.mlhc --config pipe.cfg "
                     "--grid l3.grid --k 5 --n-query 8 --n-train 40 --split-seed 2 "
                     "--out l3.csv");
  INFO(res.err);
  REQUIRE(res.exit_code == 0);
  std::istringstream csv(slurp(work_dir() / "l3.csv"));
  std::string line;
  std::getline(csv, line);
  int cells_seen[4] = {0, 0, 0, 0};
  while (std::getline(csv, line)) {
    int cell = line[0] - '0';
    REQUIRE(cell >= 0);
    REQUIRE(cell < 4);
    ++cells_seen[cell];
  }
  for (int c : cells_seen) REQUIRE(c == 4);  // 2 branches x (1 seed + mean)
}

TEST_CASE("cleanup") { fs::remove_all(work_dir()); }
