#pragma once

// CSV tables with a self-describing comment header, content checksums, and
// small exporters for lattice data.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wsdrive/error.hpp"
#include "wsdrive/lattice.hpp"
#include "wsdrive/oracle.hpp"

namespace wsdrive {

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Shortest round-trip representation, so output bytes depend only on values.
inline std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw NumericError("format_number: conversion failed");
  return std::string(buf, end);
}

struct CsvTable {
  std::vector<std::string> columns;  // name_unit, e.g. "time_s"
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, std::string>> metadata;

  void add_row(std::vector<double> row) {
    if (row.size() != columns.size()) throw ValidationError("CsvTable: row width does not match columns");
    rows.push_back(std::move(row));
  }

  std::string str() const {
    std::string out = "# wsdrive-csv 1\n";
    for (const auto& [k, v] : metadata) out += "# " + k + ": " + v + "\n";
    std::string header;
    for (std::size_t i = 0; i < columns.size(); ++i) header += (i ? "," : "") + columns[i];
    out += "# columns: " + header + "\n" + header + "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) out += ',';
        out += format_number(r[i]);
      }
      out += '\n';
    }
    return out;
  }
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw NumericError("cannot write " + path.string());
}

// Reads the numeric body of a CsvTable file (comment lines and the column
// line are skipped; column names are returned separately).
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  bool have_columns = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!have_columns) {
      t.columns = cells;
      have_columns = true;
      continue;
    }
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::stod(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable band_csv(const BandStructure& band) {
  CsvTable t;
  t.columns = {"q_hbar_k", "energy_recoil"};
  t.metadata.push_back({"lattice_depth_recoil", format_number(band.depth)});
  t.metadata.push_back({"plane_waves", std::to_string(band.plane_waves)});
  for (std::size_t i = 0; i < band.quasimomentum.size(); ++i) t.add_row({band.quasimomentum[i], band.energy[i]});
  return t;
}

inline CsvTable envelope_csv(const WannierEnvelope& env) {
  CsvTable t;
  t.columns = {"x_sites", "wannier_per_sqrt_site"};
  t.metadata.push_back({"model", to_string(env.model)});
  for (std::size_t j = 0; j < env.values.size(); ++j) t.add_row({env.position(j), env.values[j]});
  return t;
}

// Site populations of one oracle snapshot in lattice cells.
inline CsvTable cell_population_csv(const GridState& s) {
  const auto c = cell_populations(s);
  CsvTable t;
  t.columns = {"site", "population"};
  t.metadata.push_back({"time_s", format_number(s.time)});
  for (std::size_t i = 0; i < c.populations.size(); ++i)
    t.add_row({double(c.first_site + long(i)), c.populations[i]});
  return t;
}

}  // namespace wsdrive
