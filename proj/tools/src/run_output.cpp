#include "run_output.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include "durm/digest.hpp"

namespace durm::cli {

std::string manifest_digest(const json& config, const std::string& provenance) {
  const json input = {{"config", config}, {"dataset_provenance", provenance}};
  return sha256_hex(input.dump());
}

namespace {

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

json make_manifest(const std::string& kind, const json& config,
                   const std::string& provenance) {
  return json{{"schema_version", kSchemaVersion},
              {"kind", kind},
              {"config", config},
              {"dataset_provenance", provenance},
              {"digest", manifest_digest(config, provenance)},
              {"created_utc", utc_now()}};
}

std::filesystem::path prepare_run_dir(const std::filesystem::path& out_root,
                                      const json& manifest) {
  const std::string digest = manifest.at("digest").get<std::string>();
  const std::filesystem::path dir = out_root / digest.substr(0, 12);
  std::filesystem::create_directories(dir);
  write_json_file(dir / "manifest.json", manifest);
  return dir;
}

void write_json_file(const std::filesystem::path& path, const json& value) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json trace_to_json(const GradientTrace& trace, const std::string& digest) {
  return json{{"schema_version", kSchemaVersion},
              {"manifest_digest", digest},
              {"grad_sum", trace.grad_sum},
              {"grad_var", trace.grad_var},
              {"dummy_fraction_mean", trace.dummy_fraction_mean},
              {"dummy_fraction_underflows", trace.dummy_fraction_underflows},
              {"layer_grad_var", trace.layer_grad_var},
              {"step_grad_norm", trace.step_grad_norm}};
}

json flatness_to_json(const FlatnessReport& report, const std::string& digest) {
  return json{{"schema_version", kSchemaVersion},
              {"manifest_digest", digest},
              {"model_distance", report.model_distance},
              {"cumulative_grad_norm", report.cumulative_grad_norm},
              {"rho", report.rho},
              {"rho_converged", report.rho_converged},
              {"epsilon_hat", report.epsilon_hat},
              {"tau", report.tau},
              {"delta", report.delta}};
}

void write_epochs_csv(const std::filesystem::path& path,
                      const std::string& digest, const TrainResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# manifest_digest:" << digest << '\n';

  const std::size_t width =
      result.trace.grad_sum.empty() ? 0 : result.trace.grad_sum.front().size();
  const std::size_t dummies = result.trace.dummy_fraction_mean.empty()
                                  ? 0
                                  : result.trace.dummy_fraction_mean.front().size();
  const std::size_t layers = result.trace.layer_grad_var.empty()
                                 ? 0
                                 : result.trace.layer_grad_var.front().size();

  out << "epoch,train_loss,train_acc,val_loss,val_acc,running_loss,"
         "model_distance,cumulative_grad_norm";
  for (std::size_t k = 0; k < width; ++k) out << ",grad_sum_c" << k;
  for (std::size_t k = 0; k < width; ++k) out << ",grad_var_c" << k;
  for (std::size_t d = 0; d < dummies; ++d) out << ",dummy_fraction_d" << d;
  for (std::size_t l = 0; l < layers; ++l) out << ",layer_grad_var_l" << l;
  out << '\n';

  for (std::size_t e = 0; e < result.completed_epochs; ++e) {
    out << e << ',' << format_double(result.train_loss[e]) << ','
        << format_double(result.train_acc[e]) << ','
        << format_double(result.val_loss[e]) << ','
        << format_double(result.val_acc[e]) << ','
        << format_double(result.running_loss[e]) << ','
        << format_double(result.flatness.model_distance[e + 1]) << ','
        << format_double(result.flatness.cumulative_grad_norm[e + 1]);
    for (std::size_t k = 0; k < width; ++k) {
      out << ',' << format_double(result.trace.grad_sum[e][k]);
    }
    for (std::size_t k = 0; k < width; ++k) {
      out << ',' << format_double(result.trace.grad_var[e][k]);
    }
    for (std::size_t d = 0; d < dummies; ++d) {
      out << ',' << format_double(result.trace.dummy_fraction_mean[e][d]);
    }
    for (std::size_t l = 0; l < layers; ++l) {
      out << ',' << format_double(result.trace.layer_grad_var[e][l]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_steps_csv(const std::filesystem::path& path,
                     const std::string& digest, const TrainResult& result,
                     std::size_t batches_per_epoch) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# manifest_digest:" << digest << '\n';
  out << "step,epoch,grad_norm\n";
  for (std::size_t s = 0; s < result.trace.step_grad_norm.size(); ++s) {
    out << s << ',' << s / batches_per_epoch << ','
        << format_double(result.trace.step_grad_norm[s]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace durm::cli
