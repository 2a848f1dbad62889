#include "tal/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "tal/data.hpp"

namespace tal {

using nlohmann::json;

namespace {

// One table drives load, save and the unknown-key check.
template <class Cfg, class Fn>
void visit_fields(Cfg& c, Fn&& fn) {
  fn("lambda1", c.lambda1);
  fn("lambda2", c.lambda2);
  fn("lambda3", c.lambda3);
  fn("alpha", c.alpha);
  fn("tau", c.tau);
  fn("iterations", c.iterations);
  fn("learning_rate", c.learning_rate);
  fn("epochs", c.epochs);
  fn("lr_decay_epoch", c.lr_decay_epoch);
  fn("batch_size", c.batch_size);
  fn("seed", c.seed);
  fn("n_per_gt", c.n_per_gt);
  fn("kappa", c.kappa);
  fn("grid_sample_cap", c.grid_sample_cap);
  fn("uniform_sample_cap", c.uniform_sample_cap);
  fn("use_uniform_samples", c.use_uniform_samples);
  fn("use_gt_local_samples", c.use_gt_local_samples);
  fn("hidden_width", c.hidden_width);
  fn("hidden_layers", c.hidden_layers);
  fn("cell_dim", c.cell_dim);
  fn("boundary_hidden", c.boundary_hidden);
  fn("soi_bins", c.soi_bins);
  fn("frames_per_snippet", c.frames_per_snippet);
  fn("offset_positives_only", c.offset_positives_only);
  fn("stop_gradient_coords", c.stop_gradient_coords);
  fn("softnms_threshold", c.softnms_threshold);
  fn("softnms_floor", c.softnms_floor);
  fn("top_q", c.top_q);
}

}  // namespace

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open " + path);
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError("config: malformed JSON in " + path + ": " + e.what());
  }
  RunConfig cfg = base;
  std::set<std::string> known;
  visit_fields(cfg, [&](const char* key, auto& field) {
    known.insert(key);
    if (root.contains(key)) {
      try {
        field = root.at(key).get<std::decay_t<decltype(field)>>();
      } catch (const json::exception& e) {
        throw DataError(std::string("config: bad value for '") + key + "': " +
                        e.what());
      }
    }
  });
  for (const auto& [key, value] : root.items())
    if (!known.count(key))
      throw DataError("config: unknown key '" + key + "' in " + path);
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json root;
  visit_fields(const_cast<RunConfig&>(cfg),
               [&](const char* key, auto& field) { root[key] = field; });
  return root.dump(2) + "\n";
}

}  // namespace tal
