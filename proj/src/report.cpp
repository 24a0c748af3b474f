#include "selfloop/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "selfloop/error.hpp"
#include "selfloop/world.hpp"

namespace selfloop {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#17becf", "#e377c2"};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double_field(const std::string& text, std::size_t row, const std::string& column) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(Errc::parse, "metrics CSV row " + std::to_string(row) + ": bad value '" +
                                     text + "' in column " + column);
    }
}

void require_column(const std::vector<std::string>& header, std::size_t index,
                    const std::string& expected) {
    if (index >= header.size() || header[index] != expected) {
        throw Error(Errc::schema, "metrics CSV missing column " + expected);
    }
}

std::string fmt(double v, const char* spec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

struct Series {
    std::string label;
    Vector y;
};

std::string line_chart(const std::string& title, const Vector& x,
                       const std::vector<Series>& series) {
    constexpr double kWidth = 720, kHeight = 440;
    constexpr double kLeft = 70, kTop = 40, kRight = 560, kBottom = 390;

    double ylo = std::numeric_limits<double>::infinity();
    double yhi = -ylo;
    for (const Series& s : series) {
        for (const double v : s.y) {
            ylo = std::min(ylo, v);
            yhi = std::max(yhi, v);
        }
    }
    if (!(ylo <= yhi)) {
        ylo = 0.0;
        yhi = 1.0;
    }
    if (ylo == yhi) {
        ylo -= 0.5;
        yhi += 0.5;
    } else {
        const double pad = 0.05 * (yhi - ylo);
        ylo -= pad;
        yhi += pad;
    }
    const double xlo = x.empty() ? 0.0 : x.front();
    const double xhi = x.empty() ? 1.0 : x.back();

    auto px = [&](double v) {
        if (xhi == xlo) return 0.5 * (kLeft + kRight);
        return kLeft + (v - xlo) / (xhi - xlo) * (kRight - kLeft);
    };
    auto py = [&](double v) { return kBottom - (v - ylo) / (yhi - ylo) * (kBottom - kTop); };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << 0.5 * (kLeft + kRight) << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n"
        << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight << "\" y2=\""
        << kBottom << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
        << kBottom << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << kBottom << "\" text-anchor=\"end\" "
        << "font-family=\"sans-serif\" font-size=\"11\">" << fmt(ylo, "%.4g") << "</text>\n"
        << "<text x=\"" << kLeft - 8 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\" "
        << "font-family=\"sans-serif\" font-size=\"11\">" << fmt(yhi, "%.4g") << "</text>\n"
        << "<text x=\"" << kLeft << "\" y=\"" << kBottom + 18 << "\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"11\">" << fmt(xlo, "%.4g") << "</text>\n"
        << "<text x=\"" << kRight << "\" y=\"" << kBottom + 18 << "\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"11\">" << fmt(xhi, "%.4g") << "</text>\n"
        << "<text x=\"" << 0.5 * (kLeft + kRight) << "\" y=\"" << kBottom + 36
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">generation"
        << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].y.size(); ++i) {
            svg << fmt(px(x[i]), "%.2f") << "," << fmt(py(series[s].y[i]), "%.2f") << " ";
        }
        svg << "\"/>\n";
        for (std::size_t i = 0; i < series[s].y.size(); ++i) {
            svg << "<circle cx=\"" << fmt(px(x[i]), "%.2f") << "\" cy=\""
                << fmt(py(series[s].y[i]), "%.2f") << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        }
        const double ly = kTop + 16.0 * static_cast<double>(s);
        svg << "<line x1=\"" << kRight + 14 << "\" y1=\"" << ly << "\" x2=\"" << kRight + 38
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n"
            << "<text x=\"" << kRight + 44 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[s].label << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + path);
    out << content;
    if (!out) throw Error(Errc::io, "failed while writing " + path);
}

Vector column_values(const MetricsTable& table, std::size_t column) {
    Vector values;
    values.reserve(table.records.size());
    for (const GenerationRecord& rec : table.records) {
        Vector row{rec.acc, rec.fid, rec.eo, rec.di, rec.md};
        row.insert(row.end(), rec.rank_acc.begin(), rec.rank_acc.end());
        row.insert(row.end(), rec.rates.tpr.begin(), rec.rates.tpr.end());
        values.push_back(row.at(column));
    }
    return values;
}

}  // namespace

std::string metrics_csv_header(std::size_t num_subgroups) {
    std::string header = "generation,acc,fid,eo,di,md";
    for (std::size_t k = 1; k <= num_subgroups; ++k) {
        header += ",rank_acc_" + std::to_string(k);
    }
    for (std::size_t g = 0; g < num_subgroups; ++g) header += ",tpr_" + std::to_string(g);
    return header;
}

std::string metrics_csv_row(const GenerationRecord& rec) {
    std::string row = std::to_string(rec.generation);
    for (const double v : {rec.acc, rec.fid, rec.eo, rec.di, rec.md}) {
        row += "," + format_double(v);
    }
    for (const double v : rec.rank_acc) row += "," + format_double(v);
    for (const double v : rec.rates.tpr) row += "," + format_double(v);
    return row;
}

MetricsTable read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::schema, "metrics CSV missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);

    const char* fixed[] = {"generation", "acc", "fid", "eo", "di", "md"};
    for (std::size_t i = 0; i < 6; ++i) require_column(header, i, fixed[i]);
    std::size_t groups = 0;
    while (6 + groups < header.size() &&
           header[6 + groups] == "rank_acc_" + std::to_string(groups + 1)) {
        ++groups;
    }
    if (groups == 0) throw Error(Errc::schema, "metrics CSV missing column rank_acc_1");
    for (std::size_t g = 0; g < groups; ++g) {
        require_column(header, 6 + groups + g, "tpr_" + std::to_string(g));
    }
    if (header.size() != 6 + 2 * groups) {
        throw Error(Errc::schema, "metrics CSV has unexpected column " + header[6 + 2 * groups]);
    }

    MetricsTable table;
    table.num_subgroups = groups;
    table.columns.assign(header.begin() + 1, header.end());
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw Error(Errc::schema, "metrics CSV row " + std::to_string(row_no) + " has " +
                                          std::to_string(fields.size()) + " fields, expected " +
                                          std::to_string(header.size()));
        }
        GenerationRecord rec;
        rec.generation =
            static_cast<int>(parse_double_field(fields[0], row_no, header[0]));
        rec.acc = parse_double_field(fields[1], row_no, header[1]);
        rec.fid = parse_double_field(fields[2], row_no, header[2]);
        rec.eo = parse_double_field(fields[3], row_no, header[3]);
        rec.di = parse_double_field(fields[4], row_no, header[4]);
        rec.md = parse_double_field(fields[5], row_no, header[5]);
        for (std::size_t g = 0; g < groups; ++g) {
            rec.rank_acc.push_back(parse_double_field(fields[6 + g], row_no, header[6 + g]));
        }
        for (std::size_t g = 0; g < groups; ++g) {
            rec.rates.tpr.push_back(
                parse_double_field(fields[6 + groups + g], row_no, header[6 + groups + g]));
        }
        rec.rates.counts.assign(groups, 0);  // counts are not serialized
        table.records.push_back(std::move(rec));
        ++row_no;
    }
    return table;
}

void write_aggregate_csv(const std::vector<std::vector<GenerationRecord>>& per_seed,
                         const std::string& path) {
    if (per_seed.empty() || per_seed.front().empty()) {
        throw Error(Errc::empty_input, "no records to aggregate");
    }
    const std::size_t runs = per_seed.size();
    const std::size_t rows = per_seed.front().size();
    const std::size_t groups = per_seed.front().front().rates.tpr.size();
    for (const auto& records : per_seed) {
        if (records.size() != rows) {
            throw Error(Errc::shape, "aggregate runs disagree on record counts");
        }
    }

    std::string header = "generation";
    std::vector<std::string> names{"acc", "fid", "eo", "di", "md"};
    for (std::size_t k = 1; k <= groups; ++k) names.push_back("rank_acc_" + std::to_string(k));
    for (std::size_t g = 0; g < groups; ++g) names.push_back("tpr_" + std::to_string(g));
    for (const std::string& n : names) header += "," + n + "_mean," + n + "_std";

    auto values_of = [groups](const GenerationRecord& rec) {
        Vector v{rec.acc, rec.fid, rec.eo, rec.di, rec.md};
        v.insert(v.end(), rec.rank_acc.begin(), rec.rank_acc.end());
        v.insert(v.end(), rec.rates.tpr.begin(), rec.rates.tpr.end());
        if (v.size() != 5 + 2 * groups) {
            throw Error(Errc::shape, "aggregate runs disagree on subgroup counts");
        }
        return v;
    };

    std::string body;
    for (std::size_t row = 0; row < rows; ++row) {
        body += std::to_string(per_seed.front()[row].generation);
        for (std::size_t col = 0; col < 5 + 2 * groups; ++col) {
            double mean = 0.0;
            for (const auto& records : per_seed) mean += values_of(records[row])[col];
            mean /= static_cast<double>(runs);
            double var = 0.0;
            if (runs > 1) {
                for (const auto& records : per_seed) {
                    const double d = values_of(records[row])[col] - mean;
                    var += d * d;
                }
                var /= static_cast<double>(runs - 1);
            }
            body += "," + format_double(mean) + "," + format_double(std::sqrt(var));
        }
        body += "\n";
    }
    write_text_file(path, header + "\n" + body);
}

void write_report(const MetricsTable& table, const std::string& out_dir) {
    if (table.records.empty()) throw Error(Errc::empty_input, "metrics CSV has no rows");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(Errc::io, "cannot create " + out_dir + ": " + ec.message());

    Vector x;
    for (const GenerationRecord& rec : table.records) {
        x.push_back(static_cast<double>(rec.generation));
    }
    const std::size_t groups = table.num_subgroups;

    auto series_for = [&](std::size_t first, std::size_t count) {
        std::vector<Series> list;
        for (std::size_t i = 0; i < count; ++i) {
            list.push_back({table.columns[first + i], column_values(table, first + i)});
        }
        return list;
    };

    const std::string base = out_dir + "/";
    write_text_file(base + "accuracy.svg", line_chart("Accuracy", x, series_for(0, 1)));
    write_text_file(base + "fid.svg", line_chart("Frechet distance", x, series_for(1, 1)));
    write_text_file(base + "fairness.svg", line_chart("Fairness metrics", x, series_for(2, 3)));
    write_text_file(base + "rank_accuracy.svg",
                    line_chart("Subgroup rank accuracy", x, series_for(5, groups)));
    write_text_file(base + "tpr.svg",
                    line_chart("Subgroup TPR", x, series_for(5 + groups, groups)));

    std::string summary = "column min max\n";
    for (std::size_t col = 0; col < table.columns.size(); ++col) {
        const Vector values = column_values(table, col);
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        summary += table.columns[col] + " " + format_double(*lo) + " " + format_double(*hi) + "\n";
    }
    write_text_file(base + "summary.txt", summary);
}

}  // namespace selfloop
