#pragma once

#include <stdexcept>
#include <string>

namespace slimnam
{

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Invalid architecture or training configuration.
class ConfigError : public Error
{
public:
  using Error::Error;
};

/// Active width outside [1, channels].
class WidthError : public Error
{
public:
  using Error::Error;
};

/// Non-finite or otherwise unusable input signal.
class InputError : public Error
{
public:
  using Error::Error;
};

/// Stream buffer larger than the engine was prepared for.
class BufferError : public Error
{
public:
  using Error::Error;
};

/// Malformed or inconsistent model file.
class LoadError : public Error
{
public:
  using Error::Error;
};

/// ESR requested against a target with zero energy.
class DegenerateTargetError : public Error
{
public:
  using Error::Error;
};

class WavError : public Error
{
public:
  using Error::Error;
};

} // namespace slimnam
