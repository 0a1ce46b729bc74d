#include "memlora/bo.hpp"

#include "memlora/common.hpp"
#include "memlora/gp.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace memlora {

namespace {

constexpr uint64_t kEvalStream = 1000;
constexpr uint64_t kFitStream = 2000;
constexpr uint64_t kProposeStream = 3000;
constexpr double kImputeMargin = 0.1;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Worst successful objectives minus margin; keeps the surrogate well-posed
// without letting failures reach the front.
void impute_failed(Observation& obs, const std::vector<Observation>& log) {
  double worst_loss = 1.0, worst_rl = 0.0;
  bool any = false;
  for (const auto& o : log)
    if (!o.failed) {
      worst_loss = any ? std::max(worst_loss, o.loss) : o.loss;
      worst_rl = any ? std::min(worst_rl, o.rouge_l) : o.rouge_l;
      any = true;
    }
  obs.loss = worst_loss + kImputeMargin;
  obs.rouge_l = std::max(0.0, worst_rl - kImputeMargin);
}

}  // namespace

ParetoFront front_of(const std::vector<Observation>& log) {
  std::vector<Objectives> pts;
  for (const auto& o : log)
    if (!o.failed) pts.push_back(o.objectives());
  if (pts.empty()) throw std::runtime_error("front_of: no successful observations");
  return pareto_filter(pts);
}

void write_csv_header(std::ostream& os) { os << "iteration,config,x,l,rl,status\n"; }

void write_csv_row(std::ostream& os, size_t iteration, const Observation& obs) {
  os << iteration << ',' << config_to_string(obs.point.decoded) << ',';
  for (size_t i = 0; i < obs.point.x.size(); ++i) {
    if (i) os << ';';
    os << format_double(obs.point.x[i]);
  }
  os << ',' << format_double(obs.loss) << ',' << format_double(obs.rouge_l) << ','
     << (obs.failed ? "failed" : "ok") << '\n';
  os.flush();
}

std::vector<Observation> read_csv(const std::string& path, const SearchSpaceDef& def) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_csv: cannot open " + path);
  std::vector<Observation> log;
  std::string line;
  bool header = true;
  while (std::getline(f, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream is(line);
    std::string col;
    while (std::getline(is, col, ',')) cols.push_back(col);
    // the config column itself contains commas; anchor on the fixed columns
    // at both ends: iteration | config... | x | l | rl | status
    if (cols.size() < 6) throw std::runtime_error("read_csv: malformed row: " + line);
    const size_t n = cols.size();
    Observation obs;
    std::vector<double> x;
    std::istringstream xs(cols[n - 4]);
    std::string v;
    while (std::getline(xs, v, ';')) x.push_back(std::stod(v));
    obs.point = make_point(std::move(x), def);
    obs.loss = std::stod(cols[n - 3]);
    obs.rouge_l = std::stod(cols[n - 2]);
    obs.failed = cols[n - 1] == "failed";
    log.push_back(std::move(obs));
  }
  return log;
}

RunState run_search(const SearchSpaceDef& def, const Evaluator& evaluate, const BoConfig& cfg,
                    uint64_t master_seed, std::vector<Observation> resume, std::ostream* csv) {
  if (cfg.budget < cfg.init_count)
    throw std::invalid_argument("run_search: budget below the initial design size");
  RunState state;
  state.log = std::move(resume);

  auto hv_of_prefix = [&](size_t k) {
    std::vector<Objectives> pts;
    for (size_t j = 0; j < k; ++j)
      if (!state.log[j].failed) pts.push_back(state.log[j].objectives());
    if (pts.empty()) return 0.0;
    ParetoFront f = pareto_filter(pts);
    state.front = f;
    return hypervolume_2d(f);
  };
  auto record = [&](Observation obs) {
    if (obs.failed) impute_failed(obs, state.log);
    if (csv) write_csv_row(*csv, state.log.size(), obs);
    state.log.push_back(std::move(obs));
    state.hv_history.push_back(hv_of_prefix(state.log.size()));
  };
  for (size_t k = 1; k <= state.log.size(); ++k)  // resumed entries
    state.hv_history.push_back(hv_of_prefix(k));

  const auto initial = sample_initial(def, cfg.init_count, mix_seed(master_seed, 0));
  if (static_cast<int>(state.log.size()) < cfg.init_count) {
    const size_t first = state.log.size();
    const size_t pending = static_cast<size_t>(cfg.init_count) - first;
    std::vector<Observation> results(pending);
    if (cfg.jobs <= 1 || pending <= 1) {
      for (size_t j = 0; j < pending; ++j) {
        const size_t i = first + j;
        results[j] = evaluate(initial[i], mix_seed(master_seed, kEvalStream + i));
      }
    } else {
      // per-index seeds make the outcome independent of scheduling
      std::atomic<size_t> cursor{0};
      auto worker = [&] {
        for (size_t j = cursor.fetch_add(1); j < pending; j = cursor.fetch_add(1)) {
          const size_t i = first + j;
          results[j] = evaluate(initial[i], mix_seed(master_seed, kEvalStream + i));
        }
      };
      std::vector<std::thread> pool;
      for (int t = 0; t < std::min<int>(cfg.jobs, static_cast<int>(pending)); ++t)
        pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    for (size_t j = 0; j < pending; ++j) {
      results[j].train_seed = mix_seed(master_seed, kEvalStream + first + j);
      record(std::move(results[j]));
    }
  }

  while (static_cast<int>(state.log.size()) < cfg.budget) {
    const size_t i = state.log.size();
    // convergence: hypervolume stalled over the last `window` evaluations
    if (static_cast<int>(state.hv_history.size()) > cfg.window) {
      const double recent = state.hv_history.back();
      const double before = state.hv_history[state.hv_history.size() - 1 - cfg.window];
      if (recent - before < cfg.eps_hv) {
        state.converged = true;
        break;
      }
    }

    SearchPoint next;
    try {
      const Eigen::Index n = static_cast<Eigen::Index>(state.log.size());
      Matrix X(n, def.dim());
      Matrix Y(n, 2);
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto& o = state.log[static_cast<size_t>(r)];
        for (int d = 0; d < def.dim(); ++d) X(r, d) = o.point.x[static_cast<size_t>(d)];
        const Objectives obj = o.objectives();
        Y(r, 0) = obj[0];
        Y(r, 1) = obj[1];
      }
      GpPosterior post = fit_gp(X, Y, mix_seed(master_seed, kFitStream + i));
      {
        std::ostringstream gs;
        for (size_t mi = 0; mi < post.models.size(); ++mi) {
          const auto& hp = post.models[mi].hp;
          gs << "objective " << mi << ": sf2=" << hp.sf2 << " sn2=" << hp.sn2
             << " rho_max=" << hp.rho.maxCoeff() << " rho_min=" << hp.rho.minCoeff() << "; ";
        }
        state.last_gp_summary = gs.str();
      }
      ParetoFront front = front_of(state.log);
      std::vector<std::vector<double>> preimages;
      for (const auto& o : state.log)
        if (!o.failed) {
          const Objectives obj = o.objectives();
          if (std::find(front.points.begin(), front.points.end(), obj) != front.points.end())
            preimages.push_back(o.point.x);
        }
      next = propose(post, front, def, preimages, cfg.pool_size, cfg.mc_samples,
                     mix_seed(master_seed, kProposeStream + i));
    } catch (const std::exception& e) {
      state.notes.push_back("iteration " + std::to_string(i) + ": GP fit failed (" + e.what() +
                            "); random proposal");
      std::mt19937_64 rng(mix_seed(master_seed, kProposeStream + i));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> x(static_cast<size_t>(def.dim()));
      for (auto& v : x) v = u(rng);
      next = make_point(std::move(x), def);
    }
    Observation obs = evaluate(next, mix_seed(master_seed, kEvalStream + i));
    obs.train_seed = mix_seed(master_seed, kEvalStream + i);
    record(std::move(obs));
  }

  bool any_success = false;
  for (const auto& o : state.log) any_success |= !o.failed;
  if (any_success) state.front = front_of(state.log);
  return state;
}

const Observation& best_configuration(const RunState& state) {
  const Observation* best = nullptr;
  for (const auto& o : state.log) {
    if (o.failed) continue;
    const Objectives obj = o.objectives();
    if (std::find(state.front.points.begin(), state.front.points.end(), obj) ==
        state.front.points.end())
      continue;
    if (!best || o.rouge_l > best->rouge_l ||
        (o.rouge_l == best->rouge_l && o.loss < best->loss))
      best = &o;  // log order breaks remaining ties toward the earliest
  }
  if (!best) throw std::runtime_error("best_configuration: all observations failed");
  return *best;
}

}  // namespace memlora
