#include "stpn/timeline.hpp"

#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace stpn {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int digits(std::string_view s, std::size_t at, std::size_t n) {
  if (at + n > s.size()) throw std::invalid_argument("timestamp too short");
  int v = 0;
  for (std::size_t i = at; i < at + n; ++i) {
    if (s[i] < '0' || s[i] > '9') throw std::invalid_argument("non-digit in timestamp");
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

}  // namespace

Timestamp make_timestamp(int year, unsigned month, unsigned day, int minute_of_day) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
  const auto days_since = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days_since) * 1440 + minute_of_day;
}

Timestamp parse_timestamp(std::string_view text) {
  try {
    while (!text.empty() && (text.front() == ' ' || text.front() == '"')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '"' || text.back() == '\r'))
      text.remove_suffix(1);
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') throw std::invalid_argument("date");
    const int y = digits(text, 0, 4);
    const int mo = digits(text, 5, 2);
    const int d = digits(text, 8, 2);
    int minutes = 0;
    if (text.size() > 10) {
      if ((text[10] != ' ' && text[10] != 'T') || text.size() < 16 || text[13] != ':')
        throw std::invalid_argument("time");
      const int hh = digits(text, 11, 2);
      const int mm = digits(text, 14, 2);
      if (hh > 24 || mm > 59 || (hh == 24 && mm != 0)) throw std::invalid_argument("time range");
      minutes = hh * 60 + mm;
    }
    return make_timestamp(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), minutes);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("unparseable timestamp '" + std::string(text) + "'");
  }
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const sys_days day{days{day_number(ts)}};
  const year_month_day ymd{day};
  const int mod = minute_of_day(ts);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), mod / 60,
                mod % 60);
  return buf;
}

std::int64_t day_number(Timestamp ts) { return floor_div(ts, 1440); }

int minute_of_day(Timestamp ts) { return static_cast<int>(ts - day_number(ts) * 1440); }

int iso_weekday(Timestamp ts) {
  // 1970-01-01 was a Thursday (index 3 with Monday = 0).
  return static_cast<int>(((day_number(ts) % 7) + 7 + 3) % 7);
}

std::size_t OperatingWindow::slots_per_day() const {
  return static_cast<std::size_t>((end_minute - start_minute) / slot_minutes);
}

void OperatingWindow::validate() const {
  if (slot_minutes <= 0 || start_minute < 0 || end_minute > 1440 || end_minute <= start_minute ||
      (end_minute - start_minute) % slot_minutes != 0) {
    throw std::invalid_argument("operating window must be a whole number of slots within one day");
  }
}

Timestamp Timeline::at(std::size_t index) const {
  const std::size_t per_day = window.slots_per_day();
  const auto day = first_day + static_cast<std::int64_t>(index / per_day);
  return day * 1440 + window.start_minute +
         static_cast<Timestamp>(index % per_day) * window.slot_minutes;
}

std::vector<Timestamp> Timeline::axis() const {
  std::vector<Timestamp> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
  return out;
}

std::optional<std::size_t> Timeline::slot_of(Timestamp ts) const {
  const std::int64_t day = day_number(ts) - first_day;
  if (day < 0 || day >= static_cast<std::int64_t>(days)) return std::nullopt;
  const int mod = minute_of_day(ts);
  if (mod < window.start_minute || mod >= window.end_minute) return std::nullopt;
  const auto slot = static_cast<std::size_t>((mod - window.start_minute) / window.slot_minutes);
  return static_cast<std::size_t>(day) * window.slots_per_day() + slot;
}

}  // namespace stpn
