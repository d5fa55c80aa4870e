#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stpn {

/// Minutes since 1970-01-01T00:00 (UTC, or local time used consistently).
using Timestamp = std::int64_t;

/// Accepts "YYYY-MM-DD HH:MM", "YYYY-MM-DDTHH:MM" (optionally ":SS") and a
/// bare "YYYY-MM-DD" (midnight). Throws std::invalid_argument otherwise.
Timestamp parse_timestamp(std::string_view text);
/// "YYYY-MM-DDTHH:MM".
std::string format_timestamp(Timestamp ts);

Timestamp make_timestamp(int year, unsigned month, unsigned day, int minute_of_day = 0);
std::int64_t day_number(Timestamp ts);
int minute_of_day(Timestamp ts);
/// 0 = Monday ... 6 = Sunday.
int iso_weekday(Timestamp ts);

/// Daily operating window cut into fixed slots. Times outside the window
/// are dropped at aggregation.
struct OperatingWindow {
  int start_minute = 6 * 60;
  int end_minute = 24 * 60;
  int slot_minutes = 30;

  std::size_t slots_per_day() const;
  void validate() const;
};

/// Contiguous sequence of whole days, each holding `slots_per_day` slots.
struct Timeline {
  std::int64_t first_day = 0;
  std::size_t days = 0;
  OperatingWindow window;

  std::size_t size() const { return days * window.slots_per_day(); }
  Timestamp at(std::size_t index) const;
  std::vector<Timestamp> axis() const;
  std::optional<std::size_t> slot_of(Timestamp ts) const;
  std::size_t slot_in_day(std::size_t index) const { return index % window.slots_per_day(); }
};

}  // namespace stpn
