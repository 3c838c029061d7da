#include "crtmi/config_file.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace crtmi {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::istringstream in(s);
  std::string token;
  while (std::getline(in, token, sep)) {
    token = trim(token);
    if (!token.empty()) parts.push_back(token);
  }
  return parts;
}

std::array<double, 2> parse_pair(const std::string& key, const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() != 2)
    throw std::invalid_argument("key " + key + " expects a pair 'a,b', got: " + value);
  return {std::stod(parts[0]), std::stod(parts[1])};
}

Mechanism parse_mechanism(const std::string& s) {
  if (s == "individual") return Mechanism::individual;
  if (s == "cluster") return Mechanism::cluster;
  if (s == "both") return Mechanism::both;
  if (s == "treatment") return Mechanism::treatment;
  throw std::invalid_argument("unknown factor level: mechanism " + s);
}

Method parse_method(const std::string& s) {
  if (s == "CCA") return Method::CCA;
  if (s == "SMI") return Method::SMI;
  if (s == "FMI") return Method::FMI;
  if (s == "MMI") return Method::MMI;
  throw std::invalid_argument("unknown method: " + s);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "factors.icc") {
      for (const auto& pair_text : split(value, ';')) {
        const auto pair = parse_pair(key, pair_text);
        config.overrides.icc_pairs.emplace_back(pair[0], pair[1]);
      }
    } else if (key == "factors.design") {
      for (const auto& label : split(value, ',')) config.overrides.designs.push_back(label);
    } else if (key == "factors.mechanism") {
      for (const auto& m : split(value, ','))
        config.overrides.mechanisms.push_back(parse_mechanism(m));
    } else if (key == "factors.eta") {
      for (const auto& e : split(value, ',')) {
        if (e == "low") config.overrides.etas.push_back(EtaLevel::low);
        else if (e == "high") config.overrides.etas.push_back(EtaLevel::high);
        else throw std::invalid_argument("unknown factor level: eta " + e);
      }
    } else if (key == "factors.nonresponse") {
      for (const auto& n : split(value, ',')) {
        if (n == "equal") config.overrides.nonresponses.push_back(NonresponseLevel::equal);
        else if (n == "different")
          config.overrides.nonresponses.push_back(NonresponseLevel::different);
        else throw std::invalid_argument("unknown factor level: nonresponse " + n);
      }
    } else if (key == "generation.intercepts") {
      config.overrides.gen.intercepts = parse_pair(key, value);
    } else if (key == "generation.beta") {
      config.overrides.gen.beta = parse_pair(key, value);
    } else if (key == "generation.nu_x") {
      config.overrides.gen.nu_x = parse_pair(key, value);
    } else if (key == "generation.nu_w") {
      config.overrides.gen.nu_w = parse_pair(key, value);
    } else if (key == "generation.total_var") {
      config.overrides.gen.total_var = parse_pair(key, value);
    } else if (key == "generation.rho") {
      config.overrides.gen.rho = std::stod(value);
    } else if (key == "generation.phi") {
      config.overrides.gen.phi = std::stod(value);
    } else if (key == "run.M") {
      config.overrides.n_imputations = std::stoi(value);
    } else if (key == "run.N") {
      config.overrides.n_replicates = std::stoi(value);
    } else if (key == "run.seed") {
      config.seed = std::stoull(value);
    } else if (key == "run.methods") {
      std::vector<Method> methods;
      for (const auto& m : split(value, ',')) methods.push_back(parse_method(m));
      config.overrides.methods = methods;
    } else {
      throw std::invalid_argument("unknown key: " + key);
    }
  }
  return config;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  const auto& ov = config.overrides;
  if (!ov.icc_pairs.empty()) {
    out << "factors.icc = ";
    for (std::size_t i = 0; i < ov.icc_pairs.size(); ++i)
      out << (i ? " ; " : "") << ov.icc_pairs[i].first << "," << ov.icc_pairs[i].second;
    out << "\n";
  }
  if (!ov.designs.empty()) {
    out << "factors.design = ";
    for (std::size_t i = 0; i < ov.designs.size(); ++i) out << (i ? ", " : "") << ov.designs[i];
    out << "\n";
  }
  if (!ov.mechanisms.empty()) {
    out << "factors.mechanism = ";
    for (std::size_t i = 0; i < ov.mechanisms.size(); ++i)
      out << (i ? ", " : "") << to_string(ov.mechanisms[i]);
    out << "\n";
  }
  if (!ov.etas.empty()) {
    out << "factors.eta = ";
    for (std::size_t i = 0; i < ov.etas.size(); ++i) out << (i ? ", " : "") << to_string(ov.etas[i]);
    out << "\n";
  }
  if (!ov.nonresponses.empty()) {
    out << "factors.nonresponse = ";
    for (std::size_t i = 0; i < ov.nonresponses.size(); ++i)
      out << (i ? ", " : "") << to_string(ov.nonresponses[i]);
    out << "\n";
  }
  const GenParams defaults;
  const auto& gen = ov.gen;
  const auto pair_line = [&out](const char* key, const std::array<double, 2>& v) {
    out << key << " = " << v[0] << "," << v[1] << "\n";
  };
  if (gen.intercepts != defaults.intercepts) pair_line("generation.intercepts", gen.intercepts);
  if (gen.beta != defaults.beta) pair_line("generation.beta", gen.beta);
  if (gen.nu_x != defaults.nu_x) pair_line("generation.nu_x", gen.nu_x);
  if (gen.nu_w != defaults.nu_w) pair_line("generation.nu_w", gen.nu_w);
  if (gen.total_var != defaults.total_var) pair_line("generation.total_var", gen.total_var);
  if (gen.rho != defaults.rho) out << "generation.rho = " << gen.rho << "\n";
  if (gen.phi != defaults.phi) out << "generation.phi = " << gen.phi << "\n";
  if (ov.n_imputations) out << "run.M = " << *ov.n_imputations << "\n";
  if (ov.n_replicates) out << "run.N = " << *ov.n_replicates << "\n";
  out << "run.seed = " << config.seed << "\n";
  if (ov.methods) {
    out << "run.methods = ";
    for (std::size_t i = 0; i < ov.methods->size(); ++i)
      out << (i ? "," : "") << to_string((*ov.methods)[i]);
    out << "\n";
  }
  return out.str();
}

}  // namespace crtmi
