#pragma once

#include <initializer_list>
#include <string>

#include "drts/core.hpp"

namespace drts::test {

inline RelationTuple tuple(std::string relation, std::initializer_list<const char*> args) {
  RelationTuple t{std::move(relation), {}};
  for (const char* a : args) t.args.push_back(*VariableId::parse(a));
  return t;
}

}  // namespace drts::test
