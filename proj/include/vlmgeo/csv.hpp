#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "vlmgeo/error.hpp"

namespace vlmgeo {

// Minimal RFC 4180 writer: fields containing a comma, quote or newline are
// quoted.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::trunc) {
        if (!out_) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            write_field(fields[i]);
        }
        out_ << '\n';
        if (!out_) throw Error(Errc::io, "write failure on '" + path_.string() + "'");
    }

private:
    void write_field(const std::string& f) {
        if (f.find_first_of(",\"\n\r") == std::string::npos) {
            out_ << f;
            return;
        }
        out_ << '"';
        for (char c : f) {
            if (c == '"') out_ << '"';
            out_ << c;
        }
        out_ << '"';
    }

    std::filesystem::path path_;
    std::ofstream out_;
};

}  // namespace vlmgeo
