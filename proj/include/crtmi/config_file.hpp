#ifndef CRTMI_CONFIG_FILE_HPP
#define CRTMI_CONFIG_FILE_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "crtmi/datagen.hpp"

namespace crtmi {

/// A run configuration: factor-level restrictions plus generation and run
/// parameters, read from the dotted key-value text format. Recognised keys:
///   factors.icc          ICC pairs "a,b" separated by ';'
///   factors.design       many-small | few-large | unbalanced
///   factors.mechanism    individual | cluster | both | treatment
///   factors.eta          low | high
///   factors.nonresponse  equal | different
///   generation.{intercepts,beta,nu_x,nu_w,total_var}   value pairs "a,b"
///   generation.{rho,phi}                               scalars
///   run.{M,N,seed}       integers
///   run.methods          subset of CCA,SMI,FMI,MMI
/// Unknown keys or factor levels are errors. '#' starts a comment.
struct RunConfig {
  GridOverrides overrides;
  std::uint64_t seed = 42;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);

}  // namespace crtmi

#endif
