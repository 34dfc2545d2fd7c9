#pragma once

#include "rl/adoption.hpp"
#include "rl/financing.hpp"
#include "rl/ladder.hpp"
#include "rl/model.hpp"
#include "rl/sim.hpp"
#include "rl/telemetry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rl {

using Json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t x);

/// Shortest round-trip decimal; "NA" for non-finite values.
std::string format_number(double x);

Json to_json(const MeanSe& x);
Json to_json(const LadderSolution& sol, const ModelParams& params);
Json to_json(const QviReport& qvi);
Json to_json(const BatchStats& stats);
Json to_json(const AdoptionSolution& sol);
Json to_json(const LeveredSolution& lev);
Json to_json(const WedgeReport& report);
Json to_json(const Coef& c);
Json to_json(const WaldTest& w);
Json to_json(const EventStudyResult& res);
Json to_json(const PoissonFit& fit);
Json to_json(const PatchHazardResult& res);
Json to_json(const CascadeResult& res);
Json to_json(const PlateauResult& res);
Json to_json(const RdResult& res);
Json to_json(const ValidationReport& rep);

/// z, V, V' on an even grid spanning the band plus a margin on each side.
std::string value_csv(const LadderSolution& sol, int n);
std::string residuals_csv(const LadderSolution& sol);
/// One row per event: t, kind, z_pre, z_post, m_pre, m, v, y, publication_flag.
std::string events_csv(const std::vector<EventRecord>& events);
std::string adoption_table_csv(const std::vector<AdoptionRow>& rows);
std::string residence_csv(const std::vector<ResidenceRow>& rows);

/// Writes bytes to path, creating parent directories; throws IoError.
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string dump(const Json& j);

} // namespace rl
