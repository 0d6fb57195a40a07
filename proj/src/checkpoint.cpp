#include "dryfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dryfuse {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[12] = {'D', 'R', 'Y', 'F', 'U', 'S', 'E', '-', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T take(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointCorrupt("checkpoint truncated in " + what);
  return v;
}

Json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw CheckpointCorrupt("checkpoint has no tensor '" + name + "'");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Json header = ckpt.header;
  Json shapes = Json::array();
  for (const auto& t : ckpt.tensors) shapes.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  header["tensors"] = shapes;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".partial");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : ckpt.tensors) {
      out.write(reinterpret_cast<const char*>(t.value.data()),
                static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("error writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointNotFound("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointNotFound("checkpoint not found: " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointCorrupt(path.string() + " is not a dryfuse checkpoint");
  }
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointCorrupt("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = take<std::uint64_t>(in, "header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointCorrupt("checkpoint truncated in header");
  Checkpoint ckpt;
  try {
    ckpt.header = Json::parse(text);
    for (const auto& s : ckpt.header.at("tensors")) {
      NamedTensor t{s.at("name").get<std::string>(),
                    Matrix(s.at("rows").get<Eigen::Index>(), s.at("cols").get<Eigen::Index>())};
      if (!in.read(reinterpret_cast<char*>(t.value.data()),
                   static_cast<std::streamsize>(t.value.size() * sizeof(double)))) {
        throw CheckpointCorrupt("checkpoint truncated in tensor " + t.name);
      }
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const Json::exception& e) {
    throw CheckpointCorrupt(std::string("malformed checkpoint header: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointCorrupt("trailing bytes after checkpoint tensors");
  return ckpt;
}

Json settings_to_json(const ExperimentSettings& s) {
  RunConfig c = default_config();
  c.fusion = s.fusion;
  c.training = s.training;
  c.baselines.nn_hidden = s.nn_hidden;
  c.baselines.rgb_mode = s.rgb_mode;
  c.baselines.gp = s.gp;
  const Json full = to_json(c);
  return {{"fusion", full["fusion"]},
          {"training", full["training"]},
          {"baselines", full["baselines"]},
          {"seed", s.seed},
          {"jobs", s.jobs}};
}

ExperimentSettings settings_from_json(const Json& j) {
  Json partial = {{"fusion", j.at("fusion")}, {"training", j.at("training")}, {"baselines", j.at("baselines")}};
  const RunConfig c = apply_config(default_config(), partial);
  ExperimentSettings s;
  s.fusion = c.fusion;
  s.training = c.training;
  s.nn_hidden = c.baselines.nn_hidden;
  s.rgb_mode = c.baselines.rgb_mode;
  s.gp = c.baselines.gp;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.jobs = j.at("jobs").get<int>();
  return s;
}

Checkpoint arm_checkpoint(TrainedArm& m, const Json& provenance) {
  Checkpoint c;
  c.header["kind"] = to_string(m.arm);
  c.header["provenance"] = provenance;
  c.header["settings"] = settings_to_json(m.settings);
  c.header["model_seed"] = m.seed;
  if (!m.standardizer.empty()) {
    c.header["standardizer"] = {{"mean", vector_json(m.standardizer.mean)}, {"scale", vector_json(m.standardizer.scale)}};
  }
  c.header["loss_history"] = m.history.epoch_loss;
  switch (m.arm) {
    case Arm::ols_tabular:
    case Arm::ols_standard:
      c.header["ols"] = {{"intercept", m.ols.intercept}, {"rank", m.ols.rank}, {"rank_deficient", m.ols.rank_deficient}};
      c.tensors.push_back({"ols.coefficients", m.ols.coefficients});
      break;
    case Arm::gp_tabular:
    case Arm::gp_standard:
      c.header["gp"] = {{"signal_variance", m.gp.signal_variance},
                        {"length_scale", m.gp.length_scale},
                        {"noise_variance", m.gp.noise_variance},
                        {"jitter", m.gp.jitter},
                        {"target_mean", m.gp.target_mean},
                        {"target_scale", m.gp.target_scale},
                        {"log_marginal_likelihood", m.gp.log_marginal_likelihood}};
      c.tensors.push_back({"gp.train_x", m.gp.train_x});
      c.tensors.push_back({"gp.alpha", m.gp.alpha});
      c.tensors.push_back({"gp.cholesky_l", m.gp.cholesky_l});
      break;
    default:
      if (!m.network) throw std::logic_error("arm_checkpoint: network arm without a network");
      for (const auto* p : m.network->params()) c.tensors.push_back({p->name, p->value});
  }
  return c;
}

TrainedArm arm_from_checkpoint(const Checkpoint& c) {
  TrainedArm m;
  try {
    m.arm = parse_arm(c.header.at("kind").get<std::string>());
    m.settings = settings_from_json(c.header.at("settings"));
    m.seed = c.header.at("model_seed").get<std::uint64_t>();
    if (c.header.contains("standardizer")) {
      m.standardizer.mean = vector_from(c.header["standardizer"].at("mean"));
      m.standardizer.scale = vector_from(c.header["standardizer"].at("scale"));
    }
    m.history.epoch_loss = c.header.at("loss_history").get<std::vector<double>>();
    switch (m.arm) {
      case Arm::ols_tabular:
      case Arm::ols_standard: {
        const auto& o = c.header.at("ols");
        m.ols.intercept = o.at("intercept").get<double>();
        m.ols.rank = o.at("rank").get<Eigen::Index>();
        m.ols.rank_deficient = o.at("rank_deficient").get<bool>();
        m.ols.coefficients = c.tensor("ols.coefficients");
        break;
      }
      case Arm::gp_tabular:
      case Arm::gp_standard: {
        const auto& g = c.header.at("gp");
        m.gp.signal_variance = g.at("signal_variance").get<double>();
        m.gp.length_scale = g.at("length_scale").get<double>();
        m.gp.noise_variance = g.at("noise_variance").get<double>();
        m.gp.jitter = g.at("jitter").get<double>();
        m.gp.target_mean = g.at("target_mean").get<double>();
        m.gp.target_scale = g.at("target_scale").get<double>();
        m.gp.log_marginal_likelihood = g.at("log_marginal_likelihood").get<double>();
        m.gp.train_x = c.tensor("gp.train_x");
        m.gp.alpha = c.tensor("gp.alpha");
        m.gp.cholesky_l = c.tensor("gp.cholesky_l");
        break;
      }
      default: {
        m.network = make_network(m.arm, m.settings, m.seed);
        for (auto* p : m.network->params()) {
          const Matrix& v = c.tensor(p->name);
          if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
            throw CheckpointCorrupt("tensor " + p->name + " has the wrong shape");
          }
          p->value = v;
        }
      }
    }
  } catch (const Json::exception& e) {
    throw CheckpointCorrupt(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointCorrupt(e.what());
  }
  return m;
}

}  // namespace dryfuse
