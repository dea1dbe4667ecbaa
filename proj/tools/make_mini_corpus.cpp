// Emits the bundled mini corpus: a fully deterministic ~50-page JSONL file
// with countries, cities, people and teams wired together by hyperlinks,
// aliases, roster tables and shared entity pairs, so every mention source
// and reasoning category is exercised.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

using json = nlohmann::ordered_json;

namespace {

struct SentenceBuilder {
  std::string text;
  json links = json::array();

  SentenceBuilder& add(const std::string& s) {
    text += s;
    return *this;
  }
  SentenceBuilder& link(const std::string& surface, const std::string& target) {
    links.push_back(json{{"start", text.size()},
                         {"end", text.size() + surface.size()},
                         {"target", target}});
    text += surface;
    return *this;
  }
  json done() const { return json{{"text", text}, {"links", links}}; }
};

json cell(const std::string& text) {
  return json{{"text", text}, {"links", json::array()}};
}

json linked_cell(const std::string& text, const std::string& target) {
  json links = json::array();
  links.push_back(json{{"start", 0}, {"end", text.size()}, {"target", target}});
  return json{{"text", text}, {"links", links}};
}

std::string slug(const std::string& name) {
  std::string out;
  for (char c : name)
    out.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(
                                       static_cast<unsigned char>(c))));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_path = argc > 1 ? argv[1] : "data/mini_corpus.jsonl";

  const std::vector<std::string> countries = {"Aglaria", "Borvia", "Cadria",
                                              "Dorene", "Elvania"};
  const std::vector<std::string> cities = {
      "Springdale", "Marlowe",  "Kentbridge", "Ashford",  "Thornbury",
      "Veloria",    "Quintara", "Hollis",     "Braywick", "Lunden",
      "Farwater",   "Greystone", "Ironvale",  "Juniper",  "Westmere"};
  const std::vector<std::string> persons = {
      "Alice Aaronson", "Bob Beaumont",  "Cara Delane",   "Dmitri Eastman",
      "Elena Fairfax",  "Felix Grant",   "Greta Howell",  "Hugo Irving",
      "Iris Jennings",  "Jonas Keller",  "Kira Lambert",  "Leo Matsuda",
      "Mona Norwood",   "Nils Oberg",    "Opal Prescott", "Pavel Quint",
      "Rosa Sandoval",  "Stefan Tran",   "Tessa Umber",   "Victor Wren"};
  const std::vector<std::string> teams = {"Redhawks", "Mariners", "Cyclones",
                                          "Falcons", "Harriers"};

  auto country_id = [&](int i) { return "country_" + slug(countries[i]); };
  auto city_id = [&](int i) { return "city_" + slug(cities[i]); };
  auto person_id = [&](int i) { return "person_" + slug(persons[i]); };
  auto team_id = [&](int i) { return "team_" + slug(teams[i]); };

  auto person_city = [&](int i) { return i % static_cast<int>(cities.size()); };
  auto person_team = [&](int i) { return i % static_cast<int>(teams.size()); };
  auto person_year = [&](int i) { return 1950 + i; };
  auto person_number = [&](int i) { return 2 + i; };
  auto city_country = [&](int j) {
    return j % static_cast<int>(countries.size());
  };
  auto team_city = [&](int t) { return (t * 3) % static_cast<int>(cities.size()); };

  std::vector<json> pages;

  // countries
  for (int c = 0; c < static_cast<int>(countries.size()); ++c) {
    json par1 = json::array();
    par1.push_back(SentenceBuilder()
                       .add(countries[c] + " is a small coastal nation known "
                                           "for its river valleys.")
                       .done());
    {
      SentenceBuilder sb;
      sb.add("Major settlements of " + countries[c] + " include ");
      bool first = true;
      for (int j = 0; j < static_cast<int>(cities.size()); ++j) {
        if (city_country(j) != c) continue;
        if (!first) sb.add(" and ");
        sb.link(cities[j], city_id(j));
        first = false;
      }
      sb.add(".");
      par1.push_back(sb.done());
    }
    par1.push_back(SentenceBuilder()
                       .add("Its flag shows three silver stars over a green "
                            "field.")
                       .done());
    json page{{"id", country_id(c)},
              {"title", countries[c]},
              {"aliases", json::array({countries[c]})},
              {"paragraphs", json::array({par1})},
              {"tables", json::array()}};
    pages.push_back(std::move(page));
  }

  // cities
  for (int j = 0; j < static_cast<int>(cities.size()); ++j) {
    int c = city_country(j);
    json par1 = json::array();
    par1.push_back(SentenceBuilder()
                       .add(cities[j] + " is a city in ")
                       .link(countries[c], country_id(c))
                       .add(".")
                       .done());
    for (int i = 0; i < static_cast<int>(persons.size()); ++i) {
      if (person_city(i) != j) continue;
      par1.push_back(SentenceBuilder()
                         .add(cities[j] + " is the hometown of ")
                         .link(persons[i], person_id(i))
                         .add(".")
                         .done());
    }
    par1.push_back(SentenceBuilder()
                       .add("The old market square of " + cities[j] +
                            " dates back many centuries.")
                       .done());
    json page{{"id", city_id(j)},
              {"title", cities[j]},
              {"aliases", json::array({cities[j]})},
              {"paragraphs", json::array({par1})},
              {"tables", json::array()}};
    pages.push_back(std::move(page));
  }

  // people
  for (int i = 0; i < static_cast<int>(persons.size()); ++i) {
    int j = person_city(i);
    int t = person_team(i);
    int j2 = (j + 4) % static_cast<int>(cities.size());
    std::string first = persons[i].substr(0, persons[i].find(' '));
    std::string last = persons[i].substr(persons[i].find(' ') + 1);

    json par1 = json::array();
    par1.push_back(SentenceBuilder()
                       .add(persons[i] + " was born in ")
                       .link(cities[j], city_id(j))
                       .add(" in " + std::to_string(person_year(i)) +
                            " and wears number " +
                            std::to_string(person_number(i)) + " for the ")
                       .link(teams[t], team_id(t))
                       .add(".")
                       .done());
    par1.push_back(SentenceBuilder()
                       .add(first + " grew up near the river docks of the "
                                    "town.")
                       .done());
    par1.push_back(SentenceBuilder()
                       .add("Critics praised " + last +
                            " for a calm and patient style of play.")
                       .done());

    json par2 = json::array();
    par2.push_back(SentenceBuilder()
                       .add(persons[i] + " later moved to ")
                       .link(cities[j2], city_id(j2))
                       .add(" to train with a senior squad.")
                       .done());
    par2.push_back(SentenceBuilder()
                       .add("A documentary about " + first +
                            " aired on national radio.")
                       .done());

    json page{{"id", person_id(i)},
              {"title", persons[i]},
              {"aliases", json::array({persons[i], first, last})},
              {"paragraphs", json::array({par1, par2})},
              {"tables", json::array()}};
    pages.push_back(std::move(page));
  }

  // teams
  for (int t = 0; t < static_cast<int>(teams.size()); ++t) {
    int home = team_city(t);
    json par1 = json::array();
    par1.push_back(SentenceBuilder()
                       .add("The " + teams[t] + " are a club based in ")
                       .link(cities[home], city_id(home))
                       .add(".")
                       .done());
    for (int i = 0; i < static_cast<int>(persons.size()); ++i) {
      if (person_team(i) != t) continue;
      par1.push_back(SentenceBuilder()
                         .add("The " + teams[t] + " signed ")
                         .link(persons[i], person_id(i))
                         .add(" in " + std::to_string(person_year(i)) + ".")
                         .done());
    }
    par1.push_back(SentenceBuilder()
                       .add("Home matches draw loyal crowds in red and "
                            "white.")
                       .done());

    json rows = json::array();
    rows.push_back(json::array(
        {cell("Player"), cell("Hometown"), cell("Born"), cell("Number")}));
    for (int i = 0; i < static_cast<int>(persons.size()); ++i) {
      if (person_team(i) != t) continue;
      int j = person_city(i);
      rows.push_back(json::array(
          {linked_cell(persons[i], person_id(i)),
           linked_cell(cities[j], city_id(j)),
           cell(std::to_string(person_year(i))),
           cell(std::to_string(person_number(i)))}));
    }
    json table{{"caption", teams[t] + " roster"}, {"rows", rows}};
    json page{{"id", team_id(t)},
              {"title", teams[t]},
              {"aliases", json::array({teams[t]})},
              {"paragraphs", json::array({par1})},
              {"tables", json::array({table})}};
    pages.push_back(std::move(page));
  }

  std::ofstream os(out_path, std::ios::binary);
  if (!os) {
    std::cerr << "cannot open " << out_path << "\n";
    return 1;
  }
  for (const json& p : pages) os << p.dump() << "\n";
  std::cout << "wrote " << pages.size() << " pages to " << out_path << "\n";
  return 0;
}
