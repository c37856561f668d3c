#include "qir/model_io.hpp"

#include <fstream>

#include "qir/errors.hpp"

namespace qir {

nlohmann::json model_to_json(const QirModel& model) {
  nlohmann::json doc;
  doc["family"] = family_name(model.family());
  doc["links"] = nlohmann::json::array();
  for (LinkKind link : model.links()) doc["links"].push_back(link_name(link));
  doc["p"] = model.p();
  doc["d"] = model.d();
  doc["beta"] = nlohmann::json::array();
  for (int j = 0; j < model.d(); ++j) {
    const auto block = model.block(j);
    doc["beta"].push_back(std::vector<double>(block.begin(), block.end()));
  }
  if (model.tail_scaling()) {
    doc["tail_scaling"] = {{"scale", model.tail_scaling()->scale}, {"offset", model.tail_scaling()->offset}};
  } else {
    doc["tail_scaling"] = nullptr;
  }
  return doc;
}

QirModel model_from_json(const nlohmann::json& doc) {
  try {
    const QuantileFamily family = parse_family(doc.at("family").get<std::string>());
    LinkSet links;
    for (const auto& l : doc.at("links")) links.push_back(parse_link(l.get<std::string>()));
    const auto p = doc.at("p").get<Eigen::Index>();
    const int d = doc.at("d").get<int>();
    if (d != family.dim()) throw ParseError("model document: d does not match family");
    const auto& blocks = doc.at("beta");
    if (static_cast<int>(blocks.size()) != d) throw ParseError("model document: expected d coefficient blocks");
    Eigen::VectorXd beta(d * p);
    for (int j = 0; j < d; ++j) {
      const auto block = blocks[j].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(block.size()) != p) {
        throw ParseError("model document: coefficient block " + std::to_string(j) + " has wrong length");
      }
      for (Eigen::Index l = 0; l < p; ++l) beta(j * p + l) = block[l];
    }
    std::optional<TailScaling> ts;
    if (doc.contains("tail_scaling") && !doc["tail_scaling"].is_null()) {
      ts = TailScaling{doc["tail_scaling"].at("scale").get<std::vector<double>>(),
                       doc["tail_scaling"].at("offset").get<std::vector<double>>()};
    }
    return QirModel(family, std::move(links), p, std::move(beta), std::move(ts));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model document: ") + e.what());
  }
}

void save_model(const QirModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  out << model_to_json(model).dump(2) << '\n';
}

QirModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace qir
