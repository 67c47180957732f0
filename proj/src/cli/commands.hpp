#pragma once

#include <iosfwd>

#include "csrag/cli/cli.hpp"
#include "csrag/common/error.hpp"

namespace csrag::cli::detail {

/// A required upstream file is absent; reported with exit code 2.
class MissingArtifactError : public ValidationError {
  public:
    explicit MissingArtifactError(const std::filesystem::path& p)
        : ValidationError("missing artifact: " + p.string()), path(p) {}
    std::filesystem::path path;
};

int cmd_ingest(const Config& c, std::ostream& out, std::ostream& err);
int cmd_index(const Config& c, std::ostream& out, std::ostream& err);
int cmd_run(const Config& c, std::ostream& out, std::ostream& err);
int cmd_evaluate(const Config& c, std::ostream& out, std::ostream& err);
int cmd_judge(const Config& c, std::ostream& out, std::ostream& err);
int cmd_stats(const Config& c, std::ostream& out, std::ostream& err);
int cmd_report(const Config& c, std::ostream& out, std::ostream& err);

}  // namespace csrag::cli::detail
