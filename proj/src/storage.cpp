#include "fedsplit/storage.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedsplit/rng.hpp"

namespace fedsplit {

namespace {

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hash_hex(const std::string& text) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

nlohmann::json load_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw IoError(std::string(what) + ": cannot open '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw IoError(std::string(what) + ": malformed JSON in '" + path + "'");
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& text, const char* what) {
    std::ofstream out(path);
    if (!out) throw IoError(std::string(what) + ": cannot open '" + path + "'");
    out << text;
    if (!out) throw IoError(std::string(what) + ": write failed for '" + path + "'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

void write_checkpoint(const std::string& path, const nlohmann::json& config, int round,
                      const ParamSet& federated) {
    nlohmann::json doc;
    doc["format_version"] = kCheckpointFormatVersion;
    doc["config"] = config;
    doc["config_hash"] = hash_hex(config.dump());
    doc["round"] = round;
    nlohmann::json layers = nlohmann::json::object();
    nlohmann::json order = nlohmann::json::array();
    for (std::size_t p = 0; p < federated.size(); ++p) {
        const Tensor& t = federated.tensor(p);
        nlohmann::json layer;
        layer["shape"] = t.shape();
        layer["values"] = t.values();
        layers[federated.name(p)] = std::move(layer);
        order.push_back(federated.name(p));
    }
    doc["federated"] = std::move(layers);
    doc["layer_order"] = std::move(order);
    write_text_file(path, doc.dump(2) + "\n", "write_checkpoint");
}

Checkpoint read_checkpoint(const std::string& path) {
    nlohmann::json doc = load_json_file(path, "read_checkpoint");
    Checkpoint ck;
    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
        throw IoError("read_checkpoint: missing format_version in '" + path + "'");
    }
    ck.format_version = doc["format_version"].get<int>();
    if (ck.format_version != kCheckpointFormatVersion) {
        throw IoError("read_checkpoint: unsupported format_version " +
                      std::to_string(ck.format_version) + " in '" + path + "'");
    }
    if (!doc.contains("config") || !doc.contains("round") || !doc.contains("federated") ||
        !doc.contains("layer_order")) {
        throw IoError("read_checkpoint: missing required keys in '" + path + "'");
    }
    ck.config = doc["config"];
    ck.round = doc["round"].get<int>();
    for (const auto& name_json : doc["layer_order"]) {
        const std::string name = name_json.get<std::string>();
        const nlohmann::json& layer = doc["federated"].at(name);
        std::vector<std::size_t> shape = layer.at("shape").get<std::vector<std::size_t>>();
        std::vector<double> values = layer.at("values").get<std::vector<double>>();
        ck.federated.add(name, Tensor(std::move(shape), std::move(values)));
    }
    return ck;
}

void write_client_store(const std::string& dir, const ClientStore& store) {
    std::filesystem::create_directories(dir);
    for (const ClientRecord& rec : store.records) {
        if (rec.last_round < 0) continue;
        nlohmann::json doc;
        doc["user_id"] = rec.user_id;
        doc["embedding"] = rec.embedding.values();
        doc["last_round"] = rec.last_round;
        const std::string path = dir + "/" + rec.user_id + ".json";
        write_text_file(path, doc.dump(2) + "\n", "write_client_store");
    }
}

ClientRecord read_client_record(const std::string& path) {
    nlohmann::json doc = load_json_file(path, "read_client_record");
    if (!doc.contains("user_id") || !doc.contains("embedding") ||
        !doc.contains("last_round")) {
        throw IoError("read_client_record: missing keys in '" + path + "'");
    }
    ClientRecord rec;
    rec.user_id = doc["user_id"].get<std::string>();
    std::vector<double> values = doc["embedding"].get<std::vector<double>>();
    rec.embedding = Tensor({values.size()}, values);
    rec.last_round = doc["last_round"].get<int>();
    return rec;
}

void write_metrics_csv(const std::string& path, const MetricsHistory& rows) {
    std::ostringstream out;
    out << "round,mode,split,metric,value\n";
    for (const MetricsRow& row : rows) {
        out << row.round << "," << row.mode << "," << row.split << "," << row.metric
            << "," << format_value(row.value) << "\n";
    }
    write_text_file(path, out.str(), "write_metrics_csv");
}

MetricsHistory read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_metrics_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "round,mode,split,metric,value") {
        throw IoError("read_metrics_csv: bad header in '" + path + "'");
    }
    MetricsHistory rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 5) {
            throw IoError("read_metrics_csv: expected 5 fields at " + path + ":" +
                          std::to_string(line_no));
        }
        try {
            rows.push_back({std::stoi(fields[0]), fields[1], fields[2], fields[3],
                            std::stod(fields[4])});
        } catch (const std::exception&) {
            throw IoError("read_metrics_csv: unparseable row at " + path + ":" +
                          std::to_string(line_no));
        }
    }
    return rows;
}

void write_dataset_jsonl(const std::string& path, const std::vector<Example>& examples) {
    std::ostringstream out;
    for (const Example& ex : examples) {
        nlohmann::json doc;
        doc["user_id"] = ex.user_id;
        doc["text"] = ex.text;
        doc["label"] = ex.label;
        out << doc.dump() << "\n";
    }
    write_text_file(path, out.str(), "write_dataset_jsonl");
}

void write_clusters_json(const std::string& path,
                         const std::map<std::string, int>& clusters) {
    nlohmann::json doc(clusters);
    write_text_file(path, doc.dump(2) + "\n", "write_clusters_json");
}

std::map<std::string, int> read_clusters_json(const std::string& path) {
    nlohmann::json doc = load_json_file(path, "read_clusters_json");
    if (!doc.is_object()) {
        throw IoError("read_clusters_json: expected an object in '" + path + "'");
    }
    return doc.get<std::map<std::string, int>>();
}

EmbeddingTable read_embeddings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_embeddings_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("read_embeddings_csv: empty file '" + path + "'");
    }
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "user_id") {
        throw IoError("read_embeddings_csv: bad header in '" + path + "'");
    }
    const std::size_t dim = header.size() - 1;

    EmbeddingTable table;
    std::vector<double> flat;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != dim + 1) {
            throw IoError("read_embeddings_csv: expected " + std::to_string(dim + 1) +
                          " fields at " + path + ":" + std::to_string(line_no));
        }
        table.user_ids.push_back(fields[0]);
        for (std::size_t j = 1; j < fields.size(); ++j) {
            try {
                flat.push_back(std::stod(fields[j]));
            } catch (const std::exception&) {
                throw IoError("read_embeddings_csv: unparseable value at " + path + ":" +
                              std::to_string(line_no));
            }
        }
    }
    if (table.user_ids.empty()) {
        throw IoError("read_embeddings_csv: no data rows in '" + path + "'");
    }
    table.matrix = Tensor({table.user_ids.size(), dim}, std::move(flat));
    return table;
}

}  // namespace fedsplit
