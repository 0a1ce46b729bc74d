#include "memlora/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace memlora {

void SearchSpaceDef::validate() const {
  if (n_layers <= 0) throw std::invalid_argument("SearchSpaceDef: n_layers must be positive");
  if (n_max < 1) throw std::invalid_argument("SearchSpaceDef: n_max must be >= 1");
  if (rank_menu.empty() || !std::is_sorted(rank_menu.begin(), rank_menu.end()))
    throw std::invalid_argument("SearchSpaceDef: rank_menu must be non-empty and ascending");
  if (freeze_layers && default_layer_order.empty())
    throw std::invalid_argument("SearchSpaceDef: frozen layers need a default order");
  if (freeze_count && (default_count < 0 || default_count > n_layers))
    throw std::invalid_argument("SearchSpaceDef: frozen count default out of range");
  if (freeze_rank && std::find(rank_menu.begin(), rank_menu.end(), default_rank) == rank_menu.end())
    throw std::invalid_argument("SearchSpaceDef: frozen rank default not in menu");
}

std::vector<AdapterSpec> decode(const std::vector<double>& x, const SearchSpaceDef& def) {
  def.validate();
  if (static_cast<int>(x.size()) != def.dim())
    throw std::invalid_argument("decode: expected " + std::to_string(def.dim()) + " coordinates");
  for (double v : x)
    if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("decode: coordinate outside [0,1]");

  const int L = def.n_layers;
  const int cap = std::min(L, def.n_max);

  // activation ranking: layers ordered by activation coordinate, ties to the
  // lower index
  std::vector<int> by_activation(static_cast<size_t>(L));
  for (int i = 0; i < L; ++i) by_activation[static_cast<size_t>(i)] = i;
  std::sort(by_activation.begin(), by_activation.end(), [&](int a, int b) {
    const double xa = x[static_cast<size_t>(2 * a)], xb = x[static_cast<size_t>(2 * b)];
    return xa != xb ? xa > xb : a < b;
  });

  std::vector<int> active;
  if (def.freeze_count) {
    const int n = std::min(def.default_count, cap);
    active.assign(by_activation.begin(), by_activation.begin() + n);
  } else {
    for (int i = 0; i < L; ++i)
      if (x[static_cast<size_t>(2 * i)] >= 0.5) active.push_back(i);
    if (static_cast<int>(active.size()) > cap) {
      std::set<int> keep(by_activation.begin(), by_activation.begin() + cap);
      std::vector<int> trimmed;
      for (int i : active)
        if (keep.count(i)) trimmed.push_back(i);
      active = std::move(trimmed);
    }
  }

  if (def.freeze_layers) {
    // the choice of which layers is not searched: substitute the first n of
    // the default order
    const size_t n = std::min(active.size(), def.default_layer_order.size());
    active.assign(def.default_layer_order.begin(), def.default_layer_order.begin() + static_cast<long>(n));
  }
  std::sort(active.begin(), active.end());

  const int menu_size = static_cast<int>(def.rank_menu.size());
  std::vector<AdapterSpec> specs;
  for (int layer : active) {
    AdapterSpec s;
    s.layer = layer;
    if (def.freeze_rank) {
      s.rank = def.default_rank;
    } else {
      const double rc = x[static_cast<size_t>(2 * layer + 1)];
      const int bin = std::min(static_cast<int>(std::floor(rc * menu_size)), menu_size - 1);
      s.rank = def.rank_menu[static_cast<size_t>(bin)];
    }
    specs.push_back(s);
  }
  return specs;
}

SearchPoint make_point(std::vector<double> x, const SearchSpaceDef& def) {
  SearchPoint p;
  p.decoded = decode(x, def);
  p.x = std::move(x);
  return p;
}

std::vector<SearchPoint> sample_initial(const SearchSpaceDef& def, int count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_initial: count must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::set<std::vector<double>> seen;
  std::vector<SearchPoint> out;
  while (static_cast<int>(out.size()) < count) {
    std::vector<double> x(static_cast<size_t>(def.dim()));
    for (auto& v : x) v = u(rng);
    if (!seen.insert(x).second) continue;
    out.push_back(make_point(std::move(x), def));
  }
  return out;
}

SearchSpaceDef restrict(const SearchSpaceDef& def, const std::vector<Factor>& frozen,
                        const RestrictionDefaults& defaults) {
  SearchSpaceDef out = def;
  for (Factor f : frozen) {
    switch (f) {
      case Factor::kLayers:
        if (!defaults.layer_order) throw std::invalid_argument("restrict: missing layer-order default");
        out.freeze_layers = true;
        out.default_layer_order = *defaults.layer_order;
        break;
      case Factor::kCount:
        if (!defaults.count) throw std::invalid_argument("restrict: missing count default");
        out.freeze_count = true;
        out.default_count = *defaults.count;
        break;
      case Factor::kRank:
        if (!defaults.rank) throw std::invalid_argument("restrict: missing rank default");
        out.freeze_rank = true;
        out.default_rank = *defaults.rank;
        break;
    }
  }
  out.validate();
  return out;
}

std::string config_to_string(const std::vector<AdapterSpec>& specs) {
  if (specs.empty()) return "-";
  std::ostringstream os;
  for (size_t i = 0; i < specs.size(); ++i) {
    if (i) os << ',';
    os << 'l' << specs[i].layer << ":r" << specs[i].rank;
  }
  return os.str();
}

std::vector<AdapterSpec> config_from_string(const std::string& text) {
  std::vector<AdapterSpec> specs;
  if (text == "-" || text.empty()) return specs;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    AdapterSpec s;
    if (std::sscanf(item.c_str(), "l%d:r%d", &s.layer, &s.rank) != 2)
      throw std::invalid_argument("config_from_string: bad item \"" + item + "\"");
    specs.push_back(s);
  }
  return specs;
}

}  // namespace memlora
