#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "txadv/data.hpp"

namespace txadv {

using Json = nlohmann::ordered_json;

namespace io {

// Line 1 of every line-delimited file is a header record carrying the
// schema name and version; each following line is one record.
inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kDatasetSchema = "txadv.dataset";
inline constexpr const char* kEditsSchema = "txadv.edits";
inline constexpr const char* kCatalogSchema = "txadv.catalog";

Json sequence_to_json(const ClientSequence& seq, SplitTag tag);
ClientSequence sequence_from_json(const Json& j, SplitTag* tag);

void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

Json catalog_to_json(const MccCatalog& catalog);
MccCatalog catalog_from_json(const Json& j);

Json edit_to_json(const Edit& e);
Edit edit_from_json(const Json& j);
Json edit_list_to_json(const EditList& list);
EditList edit_list_from_json(const Json& j);

struct EditFile {
  Json header;  // schema, version and the producing attack's config/seed
  std::vector<EditList> lists;
};

void write_edit_file(std::ostream& out, const EditFile& file);
EditFile read_edit_file(std::istream& in);
void save_edit_file(const std::filesystem::path& path, const EditFile& file);
EditFile load_edit_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and renames, so readers never observe a
// partial file.
void write_file(const std::filesystem::path& path, const std::string& content);

Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

}  // namespace io
}  // namespace txadv
