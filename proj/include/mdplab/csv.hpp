/*
   Copyright 2026 The mdplab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace mdplab {

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

/// Accumulates a CSV document in memory; cells are written verbatim.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row(std::vector<std::string> cells);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_; }
  const std::string& text() const { return text_; }

 private:
  std::vector<std::string> header_;
  std::string text_;
  std::size_t rows_ = 0;
};

std::string join(const std::vector<std::string>& cells, std::string_view sep);

}  // namespace mdplab
