// Convert a leading chain of plain conv/ReLU/pool layers from a TensorFlow.js
// LayersModel into the convstack manifest + binary weight format.

import * as tf from '@tensorflow/tfjs'
import { checksumOf, FORMAT_NAME, LayerEntry, Manifest, validateManifest } from './manifest'

export interface ExportOptions {
  source?: string
  // include leading layers up to the last one whose name starts with this prefix
  layerPrefix?: string
  // or: include exactly the first N non-input layers
  layerCount?: number
}

export interface ExportResult {
  manifest: Manifest
  payload: Buffer
  // the exported sub-model, for validating outputs against the original zoo model
  truncated: tf.LayersModel
  layerNames: string[]
}

interface ConvSpec {
  kind: 'conv'
  outChannels: number
  inChannels: number
  kernel: [number, number]
  stride: number
  padding: number
  activation: 'relu' | 'linear'
  kernelWeights: Float32Array // [kh, kw, in, out] order as tfjs stores it
  bias: Float32Array
}

interface PoolSpec {
  kind: 'pool'
  pool: 'max' | 'avg'
  size: number
  stride: number
}

function squareOf(value: number | number[], what: string): number {
  if (typeof value === 'number') return value
  if (value.length === 2 && value[0] === value[1]) return value[0]
  throw new Error(`${what} must be square, got [${value}]`)
}

function convSpec(layer: tf.layers.Layer): ConvSpec {
  const config = layer.getConfig() as Record<string, unknown>
  if (config['dataFormat'] !== 'channelsLast') {
    throw new Error(`layer '${layer.name}': only channelsLast data format is supported`)
  }
  const dilation = config['dilationRate'] as number | number[]
  if (dilation !== undefined && squareOf(dilation, 'dilationRate') !== 1) {
    throw new Error(`layer '${layer.name}': dilation is not supported`)
  }
  const activation = config['activation'] as string
  if (activation !== 'relu' && activation !== 'linear') {
    throw new Error(`layer '${layer.name}': unsupported activation '${activation}'`)
  }
  const kernel = squareOf(config['kernelSize'] as number | number[], 'kernelSize')
  const stride = squareOf(config['strides'] as number | number[], 'strides')
  let padding: number
  if (config['padding'] === 'valid') {
    padding = 0
  } else if (config['padding'] === 'same') {
    if (stride !== 1 || kernel % 2 === 0) {
      throw new Error(
        `layer '${layer.name}': 'same' padding only exports for stride 1 and odd kernels`,
      )
    }
    padding = (kernel - 1) / 2
  } else {
    throw new Error(`layer '${layer.name}': unsupported padding '${config['padding']}'`)
  }
  const weights = layer.getWeights()
  const kernelTensor = weights[0]
  const [kh, kw, inCh, outCh] = kernelTensor.shape as [number, number, number, number]
  const bias =
    weights.length > 1
      ? (weights[1].dataSync() as Float32Array)
      : new Float32Array(outCh)
  return {
    kind: 'conv',
    outChannels: outCh,
    inChannels: inCh,
    kernel: [kh, kw],
    stride,
    padding,
    activation,
    kernelWeights: kernelTensor.dataSync() as Float32Array,
    bias,
  }
}

function poolSpec(layer: tf.layers.Layer, pool: 'max' | 'avg'): PoolSpec {
  const config = layer.getConfig() as Record<string, unknown>
  const size = squareOf(config['poolSize'] as number | number[], 'poolSize')
  const strides = config['strides'] as number | number[] | null
  const stride = strides == null ? size : squareOf(strides, 'strides')
  if (config['padding'] !== 'valid') {
    throw new Error(`layer '${layer.name}': only valid pool padding is supported`)
  }
  return { kind: 'pool', pool, size, stride }
}

function toSpec(layer: tf.layers.Layer): ConvSpec | PoolSpec {
  const className = layer.getClassName()
  switch (className) {
    case 'Conv2D':
      return convSpec(layer)
    case 'MaxPooling2D':
      return poolSpec(layer, 'max')
    case 'AveragePooling2D':
      return poolSpec(layer, 'avg')
    default:
      throw new Error(`unsupported layer kind '${className}' (layer '${layer.name}')`)
  }
}

// tfjs kernels are [kh, kw, in, out]; the weight format wants [out][in][kh][kw]
function reorderKernel(spec: ConvSpec): Float32Array {
  const [kh, kw] = spec.kernel
  const { inChannels: ic, outChannels: oc, kernelWeights: src } = spec
  const dst = new Float32Array(src.length)
  let out = 0
  for (let o = 0; o < oc; o++) {
    for (let i = 0; i < ic; i++) {
      for (let r = 0; r < kh; r++) {
        for (let c = 0; c < kw; c++) {
          dst[out++] = src[((r * kw + c) * ic + i) * oc + o]
        }
      }
    }
  }
  return dst
}

function selectLayers(model: tf.LayersModel, options: ExportOptions): tf.layers.Layer[] {
  const layers = model.layers.filter(l => l.getClassName() !== 'InputLayer')
  if (layers.length === 0) throw new Error('model has no exportable layers')
  if (options.layerCount !== undefined) {
    if (options.layerCount < 1 || options.layerCount > layers.length) {
      throw new Error(`layer count must be in 1..${layers.length}`)
    }
    return layers.slice(0, options.layerCount)
  }
  if (options.layerPrefix !== undefined) {
    let last = -1
    layers.forEach((layer, i) => {
      if (layer.name.startsWith(options.layerPrefix!)) last = i
    })
    if (last < 0) {
      throw new Error(`no layer name starts with '${options.layerPrefix}'`)
    }
    return layers.slice(0, last + 1)
  }
  return layers
}

export function exportModel(model: tf.LayersModel, options: ExportOptions = {}): ExportResult {
  const layers = selectLayers(model, options)
  const specs = layers.map(toSpec)

  const inputShape = model.inputs[0].shape // [batch, H, W, C]
  const inputChannels = inputShape[inputShape.length - 1]
  if (typeof inputChannels !== 'number') {
    throw new Error('model input channel count is not static')
  }

  const chunks: Buffer[] = []
  const entries: LayerEntry[] = []
  let offset = 0
  for (const spec of specs) {
    if (spec.kind === 'pool') {
      entries.push({ kind: 'pool', pool: spec.pool, size: spec.size, stride: spec.stride })
      continue
    }
    const kernelBytes = Buffer.from(reorderKernel(spec).buffer)
    const biasBytes = Buffer.from(spec.bias.buffer.slice(
      spec.bias.byteOffset, spec.bias.byteOffset + spec.bias.byteLength))
    entries.push({
      kind: 'conv',
      out_channels: spec.outChannels,
      in_channels: spec.inChannels,
      kernel: spec.kernel,
      stride: spec.stride,
      padding: spec.padding,
      activation: spec.activation,
      weights_offset: offset,
      weights_bytes: kernelBytes.length,
      bias_offset: offset + kernelBytes.length,
      bias_bytes: biasBytes.length,
    })
    chunks.push(kernelBytes, biasBytes)
    offset += kernelBytes.length + biasBytes.length
  }

  const payload = Buffer.concat(chunks)
  const manifest: Manifest = {
    format: FORMAT_NAME,
    source: options.source ?? model.name,
    input_channels: inputChannels,
    layers: entries,
    total_bytes: payload.length,
    checksum: checksumOf(payload),
  }
  validateManifest(manifest, payload)

  const truncated = tf.model({
    inputs: model.inputs,
    outputs: layers[layers.length - 1].output as tf.SymbolicTensor,
  })
  return { manifest, payload, truncated, layerNames: layers.map(l => l.name) }
}

// deterministic inputs for cross-implementation output comparison
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

export interface Fixtures {
  // both arrays are [N][C][H][W] to match the Python engine's layout
  inputs: number[][][][]
  outputs: number[][][][]
}

export function makeFixtures(
  truncated: tf.LayersModel,
  nInputs: number,
  seed = 0,
): Fixtures {
  const shape = truncated.inputs[0].shape
  const [h, w, c] = shape.slice(1) as [number, number, number]
  const rand = mulberry32(seed)
  const inputs: number[][][][] = []
  const outputs: number[][][][] = []
  for (let n = 0; n < nInputs; n++) {
    const nhwc = tf.tensor4d(
      Float32Array.from({ length: h * w * c }, () => 2 * rand() - 1),
      [1, h, w, c],
    )
    const out = truncated.predict(nhwc) as tf.Tensor4D
    const nchwIn = tf.transpose(nhwc, [0, 3, 1, 2])
    const nchwOut = tf.transpose(out, [0, 3, 1, 2])
    inputs.push((nchwIn.arraySync() as number[][][][])[0])
    outputs.push((nchwOut.arraySync() as number[][][][])[0])
    tf.dispose([nhwc, out, nchwIn, nchwOut])
  }
  return { inputs, outputs }
}
